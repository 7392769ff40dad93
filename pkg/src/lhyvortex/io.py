"""Binary field snapshots, CSV time series and ``key: value`` reports.

Snapshot layout (all little-endian)::

    b"NLSF" | u16 version (=1) | u8 geometry code | u32 dims... | f64 params... | i32 m | f64 (re, im) pairs

The number of dims/params follows from the geometry code: Cartesian2D (0)
stores ``nx, ny`` and ``Lx, Ly``; Radial2D (1) stores ``nr`` and ``r_max``;
Cylindrical3D (2) stores ``nr, nz`` and ``r_max, z_max``. Samples are written
in node-major (C) order.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .geometry import Grid, GridKind, WaveField

MAGIC = b"NLSF"
VERSION = 1
TIMESERIES_HEADER = "t,mass,kinetic,centrifugal,quartic,quintic,energy_total,px,py,angmom,variance,linf"
_LAYOUT = {
    GridKind.CARTESIAN_2D: (("nx", "ny"), ("Lx", "Ly")),
    GridKind.RADIAL_2D: (("nr",), ("r_max",)),
    GridKind.CYLINDRICAL_3D: (("nr", "nz"), ("r_max", "z_max")),
}


class SnapshotError(ValueError):
    pass


def encode_snapshot(field: WaveField) -> bytes:
    grid = field.grid
    dim_names, par_names = _LAYOUT[grid.kind]
    head = MAGIC + struct.pack("<HB", VERSION, grid.kind.code)
    head += struct.pack("<" + "I" * len(dim_names), *(getattr(grid, n) for n in dim_names))
    head += struct.pack("<" + "d" * len(par_names), *(getattr(grid, n) for n in par_names))
    head += struct.pack("<i", field.m)
    data = np.ascontiguousarray(field.values, dtype="<c16").tobytes()
    return head + data


def decode_snapshot(blob: bytes) -> WaveField:
    if len(blob) < 7:
        raise SnapshotError("truncated snapshot header")
    if blob[:4] != MAGIC:
        raise SnapshotError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    version, code = struct.unpack_from("<HB", blob, 4)
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version} (this reader handles {VERSION})")
    try:
        kind = GridKind.from_code(code)
    except ValueError as exc:
        raise SnapshotError(str(exc)) from None
    dim_names, par_names = _LAYOUT[kind]
    off = 7
    need = off + 4 * len(dim_names) + 8 * len(par_names) + 4
    if len(blob) < need:
        raise SnapshotError("truncated snapshot header")
    dims = struct.unpack_from("<" + "I" * len(dim_names), blob, off)
    off += 4 * len(dim_names)
    pars = struct.unpack_from("<" + "d" * len(par_names), blob, off)
    off += 8 * len(par_names)
    (m,) = struct.unpack_from("<i", blob, off)
    off += 4
    grid = Grid(kind, **dict(zip(dim_names, dims)), **dict(zip(par_names, pars)))
    nbytes = 16 * grid.size
    if len(blob) - off != nbytes:
        raise SnapshotError(f"payload has {len(blob) - off} bytes, expected {nbytes}")
    values = np.frombuffer(blob, dtype="<c16", count=grid.size, offset=off).astype(np.complex128)
    return WaveField(grid, values.reshape(grid.shape), m)


def write_snapshot(field: WaveField, path: str | Path) -> None:
    Path(path).write_bytes(encode_snapshot(field))


def read_snapshot(path: str | Path) -> WaveField:
    return decode_snapshot(Path(path).read_bytes())


def format_float(x: float) -> str:
    return "%.17g" % x


def write_timeseries(rows: Iterable[Mapping[str, float]], path: str | Path) -> None:
    cols = TIMESERIES_HEADER.split(",")
    with open(path, "w", newline="") as fh:
        fh.write(TIMESERIES_HEADER + "\n")
        for row in rows:
            fh.write(",".join(format_float(float(row[c])) for c in cols) + "\n")


def read_timeseries(path: str | Path) -> list[dict[str, float]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if ",".join(header) != TIMESERIES_HEADER:
            raise ValueError(f"unexpected header {header}")
        return [dict(zip(header, map(float, row))) for row in reader]


def write_table(path: str | Path, header: Iterable[str], rows: Iterable[Iterable[float]]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_float(float(v)) if not isinstance(v, str) else v for v in row) + "\n")


def write_report(path: str | Path, lines: Iterable[str]) -> None:
    Path(path).write_text("\n".join(lines) + "\n")


def read_report(path: str | Path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if ": " in line:
            k, v = line.split(": ", 1)
            out[k] = v
    return out
