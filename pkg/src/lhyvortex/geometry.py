"""Computational geometries, quadrature and elementary field arithmetic.

Three grids are supported:

* ``Cartesian2D`` -- periodic box ``[-Lx/2, Lx/2) x [-Ly/2, Ly/2)``, uniform nodes.
* ``Radial2D`` -- half-cell radial nodes ``r_j = (j + 1/2) h`` with ``h = r_max / nr``;
  the measure is ``r dr dtheta`` so every node carries weight ``2 pi r_j h``.
* ``Cylindrical3D`` -- the product of the radial rule and a cell-centred uniform
  rule on ``z in [-z_max, z_max]``.

The radial rules never sample ``r = 0``, so ``m**2 / r**2`` is finite at every
node. Fields are truncated with homogeneous Dirichlet data just outside the last
node in ``r`` and on both ends in ``z``.

All reductions go through :func:`weighted_sum`, which sums sequentially in
C (node-major) order with :func:`math.fsum`. Certificates built on top of it
are therefore bit-reproducible.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

MIN_COUNT = 8


class GeometryError(ValueError):
    """Raised for invalid grid specifications or incompatible fields."""


class GridKind(str, enum.Enum):
    CARTESIAN_2D = "Cartesian2D"
    RADIAL_2D = "Radial2D"
    CYLINDRICAL_3D = "Cylindrical3D"

    @property
    def code(self) -> int:
        return _KIND_CODES[self]

    @classmethod
    def from_code(cls, code: int) -> "GridKind":
        for kind, c in _KIND_CODES.items():
            if c == code:
                return kind
        raise GeometryError(f"unknown geometry code {code}")


_KIND_CODES = {
    GridKind.CARTESIAN_2D: 0,
    GridKind.RADIAL_2D: 1,
    GridKind.CYLINDRICAL_3D: 2,
}


@dataclass(frozen=True)
class Grid:
    """Immutable geometry descriptor.

    Only the fields relevant to ``kind`` are set; the others stay ``None``.
    Use :func:`make_grid` (or the ``cartesian``/``radial``/``cylindrical``
    constructors) rather than instantiating directly.
    """

    kind: GridKind
    nx: int | None = None
    ny: int | None = None
    Lx: float | None = None
    Ly: float | None = None
    nr: int | None = None
    r_max: float | None = None
    nz: int | None = None
    z_max: float | None = None

    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        _validate(self)

    # -- constructors --------------------------------------------------
    @classmethod
    def cartesian(cls, nx: int, ny: int, Lx: float, Ly: float) -> "Grid":
        return cls(GridKind.CARTESIAN_2D, nx=int(nx), ny=int(ny), Lx=float(Lx), Ly=float(Ly))

    @classmethod
    def radial(cls, nr: int, r_max: float) -> "Grid":
        return cls(GridKind.RADIAL_2D, nr=int(nr), r_max=float(r_max))

    @classmethod
    def cylindrical(cls, nr: int, nz: int, r_max: float, z_max: float) -> "Grid":
        return cls(
            GridKind.CYLINDRICAL_3D, nr=int(nr), nz=int(nz), r_max=float(r_max), z_max=float(z_max)
        )

    # -- basic descriptors ---------------------------------------------
    @property
    def dim(self) -> int:
        """Spatial dimension of the physical problem (2 or 3)."""
        return 3 if self.kind is GridKind.CYLINDRICAL_3D else 2

    @property
    def is_radial(self) -> bool:
        return self.kind in (GridKind.RADIAL_2D, GridKind.CYLINDRICAL_3D)

    @property
    def shape(self) -> tuple[int, ...]:
        if self.kind is GridKind.CARTESIAN_2D:
            return (self.nx, self.ny)
        if self.kind is GridKind.RADIAL_2D:
            return (self.nr,)
        return (self.nr, self.nz)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def dims(self) -> tuple[int, ...]:
        return self.shape

    @property
    def params(self) -> tuple[float, ...]:
        """Floating-point grid parameters in serialization order."""
        if self.kind is GridKind.CARTESIAN_2D:
            return (self.Lx, self.Ly)
        if self.kind is GridKind.RADIAL_2D:
            return (self.r_max,)
        return (self.r_max, self.z_max)

    @property
    def hr(self) -> float:
        return self.r_max / self.nr

    @property
    def hz(self) -> float:
        return 2.0 * self.z_max / self.nz

    @property
    def dx(self) -> float:
        return self.Lx / self.nx

    @property
    def dy(self) -> float:
        return self.Ly / self.ny

    # -- coordinates ---------------------------------------------------
    @cached_property
    def r_nodes(self) -> np.ndarray:
        """1D radial node coordinates (radial geometries only)."""
        self._require_radial()
        return (np.arange(self.nr) + 0.5) * self.hr

    @cached_property
    def r_faces(self) -> np.ndarray:
        """Cell faces ``r = f h`` for ``f = 1 .. nr`` (face ``f`` sits between nodes ``f-1`` and ``f``)."""
        self._require_radial()
        return np.arange(1, self.nr + 1) * self.hr

    @cached_property
    def z_nodes(self) -> np.ndarray:
        if self.kind is not GridKind.CYLINDRICAL_3D:
            raise GeometryError("z nodes exist only on Cylindrical3D grids")
        return -self.z_max + (np.arange(self.nz) + 0.5) * self.hz

    @cached_property
    def x_nodes(self) -> np.ndarray:
        self._require_cartesian()
        return -0.5 * self.Lx + np.arange(self.nx) * self.dx

    @cached_property
    def y_nodes(self) -> np.ndarray:
        self._require_cartesian()
        return -0.5 * self.Ly + np.arange(self.ny) * self.dy

    @cached_property
    def mesh(self) -> tuple[np.ndarray, ...]:
        """Node coordinates broadcast to ``shape``.

        Cartesian2D -> ``(x, y)``; Radial2D -> ``(r,)``; Cylindrical3D -> ``(r, z)``.
        """
        if self.kind is GridKind.CARTESIAN_2D:
            return tuple(np.meshgrid(self.x_nodes, self.y_nodes, indexing="ij"))
        if self.kind is GridKind.RADIAL_2D:
            return (self.r_nodes,)
        return tuple(np.meshgrid(self.r_nodes, self.z_nodes, indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        """Distance to the rotation axis at every node."""
        if self.kind is GridKind.CARTESIAN_2D:
            x, y = self.mesh
            return np.hypot(x, y)
        return self.mesh[0]

    @cached_property
    def position_sq(self) -> np.ndarray:
        """``|x|**2`` at every node (``r**2 + z**2`` in cylindrical geometry)."""
        if self.kind is GridKind.CYLINDRICAL_3D:
            r, z = self.mesh
            return r * r + z * z
        return self.radius**2

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weight of every node (strictly positive)."""
        if self.kind is GridKind.CARTESIAN_2D:
            return np.full(self.shape, self.dx * self.dy)
        if self.kind is GridKind.RADIAL_2D:
            return 2.0 * np.pi * self.r_nodes * self.hr
        r, _ = self.mesh
        return 2.0 * np.pi * r * self.hr * self.hz

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Angular wavenumbers ``(kx, ky)`` broadcast to ``shape`` (Cartesian only)."""
        self._require_cartesian()
        kx = 2.0 * np.pi * np.fft.fftfreq(self.nx, d=self.dx)
        ky = 2.0 * np.pi * np.fft.fftfreq(self.ny, d=self.dy)
        return tuple(np.meshgrid(kx, ky, indexing="ij"))

    def node(self, index: int) -> tuple[float, ...]:
        """Coordinates of the node with flat (C-order) ``index``."""
        idx = np.unravel_index(index, self.shape)
        return tuple(float(c[idx]) for c in self.mesh)

    def _require_radial(self) -> None:
        if not self.is_radial:
            raise GeometryError(f"{self.kind.value} grid has no radial nodes")

    def _require_cartesian(self) -> None:
        if self.kind is not GridKind.CARTESIAN_2D:
            raise GeometryError(f"operation needs a Cartesian2D grid, got {self.kind.value}")

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind.value}
        if self.kind is GridKind.CARTESIAN_2D:
            out.update(nx=self.nx, ny=self.ny, Lx=self.Lx, Ly=self.Ly)
        elif self.kind is GridKind.RADIAL_2D:
            out.update(nr=self.nr, r_max=self.r_max)
        else:
            out.update(nr=self.nr, nz=self.nz, r_max=self.r_max, z_max=self.z_max)
        return out


def _validate(grid: Grid) -> None:
    def need(name: str, positive_int: bool) -> None:
        value = getattr(grid, name)
        if value is None:
            raise GeometryError(f"{grid.kind.value} grid requires '{name}'")
        if positive_int:
            if value < MIN_COUNT:
                raise GeometryError(f"'{name}' must be >= {MIN_COUNT}, got {value}")
        elif not (value > 0 and math.isfinite(value)):
            raise GeometryError(f"'{name}' must be a positive length, got {value}")

    if not isinstance(grid.kind, GridKind):
        raise GeometryError(f"unknown grid kind {grid.kind!r}")
    if grid.kind is GridKind.CARTESIAN_2D:
        counts, lengths = ("nx", "ny"), ("Lx", "Ly")
    elif grid.kind is GridKind.RADIAL_2D:
        counts, lengths = ("nr",), ("r_max",)
    else:
        counts, lengths = ("nr", "nz"), ("r_max", "z_max")
    for name in counts:
        need(name, True)
    for name in lengths:
        need(name, False)


def make_grid(spec: dict | Grid) -> Grid:
    """Build a :class:`Grid` from a parameter mapping such as ``{"kind": "Radial2D", "nr": 64, "r_max": 8}``."""
    if isinstance(spec, Grid):
        return spec
    spec = dict(spec)
    try:
        kind = GridKind(spec.pop("kind"))
    except KeyError:
        raise GeometryError("geometry spec needs a 'kind'") from None
    except ValueError as exc:
        raise GeometryError(str(exc)) from None
    allowed = {
        GridKind.CARTESIAN_2D: {"nx", "ny", "Lx", "Ly"},
        GridKind.RADIAL_2D: {"nr", "r_max"},
        GridKind.CYLINDRICAL_3D: {"nr", "nz", "r_max", "z_max"},
    }[kind]
    extra = set(spec) - allowed
    if extra:
        raise GeometryError(f"unexpected keys for {kind.value}: {sorted(extra)}")
    for key in ("nx", "ny", "nr", "nz"):
        if key in spec:
            value = spec[key]
            if isinstance(value, bool) or int(value) != value:
                raise GeometryError(f"'{key}' must be an integer, got {value!r}")
            spec[key] = int(value)
    return Grid(kind, **spec)


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True, eq=False)
class WaveField:
    """Complex samples bound to a grid.

    On radial and cylindrical grids the samples are the amplitude ``psi`` of
    ``exp(i m theta) psi``, and ``m`` is the vortex index. On Cartesian grids
    ``m`` is informational only.
    """

    grid: Grid
    values: np.ndarray
    m: int = 0

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.complex128)
        if values.shape != self.grid.shape:
            if values.size != self.grid.size:
                raise GeometryError(
                    f"field has {values.size} samples, grid {self.grid.kind.value} has {self.grid.size} nodes"
                )
            values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values.ravel()))[0])
            raise GeometryError(f"non-finite sample at node {bad} {self.grid.node(bad)}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "m", int(self.m))

    def with_values(self, values: np.ndarray) -> "WaveField":
        return WaveField(self.grid, values, self.m)

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    def copy(self) -> "WaveField":
        return WaveField(self.grid, self.values.copy(), self.m)


def zeros(grid: Grid, m: int = 0) -> WaveField:
    return WaveField(grid, np.zeros(grid.shape, dtype=np.complex128), m)


def weighted_sum(weights: np.ndarray, values: np.ndarray) -> float:
    """Deterministic ``sum(w * v)``: products formed elementwise, then summed with ``math.fsum`` in node order."""
    return math.fsum(np.ravel(weights * values).tolist())


def quadrature(
    field: WaveField,
    integrand: Callable[[np.ndarray, tuple[np.ndarray, ...]], np.ndarray],
) -> float:
    """Integrate ``integrand(values, coords)`` over the grid.

    ``coords`` is :attr:`Grid.mesh`. The integrand must return a real array of
    the grid's shape. Summation is the correctly rounded ``math.fsum`` over
    node-major order, so results do not depend on array layout.
    """
    grid = field.grid
    vals = np.asarray(integrand(field.values, grid.mesh))
    if np.iscomplexobj(vals):
        vals = vals.real
    vals = np.broadcast_to(vals, grid.shape)
    finite = np.isfinite(vals)
    if not finite.all():
        bad = int(np.flatnonzero(~finite.ravel())[0])
        raise GeometryError(f"non-finite integrand at node {bad} {grid.node(bad)}")
    return weighted_sum(grid.weights, vals)


def seed_field(grid: Grid, m: int, amplitude: float, width: float, z0: float = 0.0) -> WaveField:
    """Gaussian-type initial iterate vanishing like ``r**|m|`` on the axis.

    ``z0`` shifts the seed along the cylinder axis (Cylindrical3D only).
    """
    if not amplitude > 0 or not width > 0:
        raise GeometryError("seed amplitude and width must be positive")
    am = abs(int(m))
    s2 = 2.0 * width * width
    if grid.kind is GridKind.RADIAL_2D:
        r = grid.r_nodes
        values = amplitude * r**am * np.exp(-r * r / s2)
    elif grid.kind is GridKind.CYLINDRICAL_3D:
        r, z = grid.mesh
        values = amplitude * r**am * np.exp(-(r * r + (z - z0) ** 2) / s2)
    else:
        x, y = grid.mesh
        rr = np.hypot(x, y)
        theta = np.arctan2(y, x)
        values = amplitude * rr**am * np.exp(1j * m * theta) * np.exp(-rr * rr / s2)
    return WaveField(grid, values, m)


def _check_same_grid(a: WaveField, b: WaveField) -> None:
    if a.grid != b.grid:
        raise GeometryError("fields live on different grids")


def axpy(a: complex, x: WaveField, b: complex, y: WaveField) -> WaveField:
    """Return ``a x + b y``."""
    _check_same_grid(x, y)
    return WaveField(x.grid, a * x.values + b * y.values, x.m)


def scale(field: WaveField, factor: complex) -> WaveField:
    return WaveField(field.grid, factor * field.values, field.m)


def field_mass(field: WaveField) -> float:
    return weighted_sum(field.grid.weights, np.abs(field.values) ** 2)


def normalize_mass(field: WaveField, rho: float) -> WaveField:
    """Rescale ``field`` so that its mass equals ``rho``."""
    current = field_mass(field)
    if not current > 0:
        raise GeometryError("cannot normalize a field with zero mass")
    if rho < 0:
        raise GeometryError("target mass must be non-negative")
    return scale(field, math.sqrt(rho / current))


def boundary_mass_fraction(field: WaveField, layers: int = 2) -> float:
    """Fraction of the mass held in the outermost ``layers`` cells of the truncated domain.

    For Cartesian grids the outer frame of the periodic box is used.
    """
    grid = field.grid
    dens = grid.weights * np.abs(field.values) ** 2
    total = float(np.sum(dens))
    if total == 0.0:
        return 0.0
    mask = np.zeros(grid.shape, dtype=bool)
    if grid.kind is GridKind.RADIAL_2D:
        mask[-layers:] = True
    elif grid.kind is GridKind.CYLINDRICAL_3D:
        mask[-layers:, :] = True
        mask[:, :layers] = True
        mask[:, -layers:] = True
    else:
        mask[:layers, :] = mask[-layers:, :] = True
        mask[:, :layers] = mask[:, -layers:] = True
    return float(np.sum(dens[mask])) / total


def resample(field: WaveField, grid: Grid) -> WaveField:
    """Interpolate a field onto another grid.

    Radial/cylindrical sources may be sampled onto any grid of the same or
    Cartesian type; a Cartesian target receives ``exp(i m theta) psi(r)``
    reconstructed from a radial source. Points outside the source domain get 0.
    """
    from scipy.interpolate import CubicSpline, RegularGridInterpolator

    src = field.grid
    if src.kind is GridKind.RADIAL_2D:
        # extend by parity across the axis so the spline sees a smooth profile
        am = abs(field.m)
        r = src.r_nodes
        rr = np.concatenate([-r[::-1], r, [src.r_max + 0.5 * src.hr]])
        vv = np.concatenate([(-1) ** am * field.values[::-1], field.values, [0.0]])
        spline_re = CubicSpline(rr, vv.real)
        spline_im = CubicSpline(rr, vv.imag)

        def prof(x: np.ndarray) -> np.ndarray:
            out = spline_re(x) + 1j * spline_im(x)
            return np.where(x <= rr[-1], out, 0.0)

        if grid.kind is GridKind.RADIAL_2D:
            return WaveField(grid, prof(grid.r_nodes), field.m)
        if grid.kind is GridKind.CARTESIAN_2D:
            x, y = grid.mesh
            theta = np.arctan2(y, x)
            return WaveField(grid, prof(np.hypot(x, y)) * np.exp(1j * field.m * theta), field.m)
        raise GeometryError("cannot resample a Radial2D field onto a Cylindrical3D grid")
    if src.kind is GridKind.CYLINDRICAL_3D and grid.kind is GridKind.CYLINDRICAL_3D:
        am = abs(field.m)
        r = src.r_nodes
        z = src.z_nodes
        rr = np.concatenate([-r[:2][::-1], r, [src.r_max + 0.5 * src.hr]])
        zz = np.concatenate([[-src.z_max - 0.5 * src.hz], z, [src.z_max + 0.5 * src.hz]])
        vals = np.zeros((rr.size, zz.size), dtype=np.complex128)
        vals[2:-1, 1:-1] = field.values
        vals[:2, 1:-1] = (-1) ** am * field.values[:2][::-1]
        interp_re = RegularGridInterpolator((rr, zz), vals.real, method="cubic", bounds_error=False, fill_value=0.0)
        interp_im = RegularGridInterpolator((rr, zz), vals.imag, method="cubic", bounds_error=False, fill_value=0.0)
        R, Z = grid.mesh
        pts = np.stack([R.ravel(), Z.ravel()], axis=-1)
        out = (interp_re(pts) + 1j * interp_im(pts)).reshape(grid.shape)
        return WaveField(grid, out, field.m)
    if src.kind is GridKind.CARTESIAN_2D and grid.kind is GridKind.CARTESIAN_2D:
        xs = np.concatenate([src.x_nodes, [0.5 * src.Lx]])
        ys = np.concatenate([src.y_nodes, [0.5 * src.Ly]])
        vals = np.pad(field.values, ((0, 1), (0, 1)), mode="wrap")
        interp_re = RegularGridInterpolator((xs, ys), vals.real, method="cubic", bounds_error=False, fill_value=0.0)
        interp_im = RegularGridInterpolator((xs, ys), vals.imag, method="cubic", bounds_error=False, fill_value=0.0)
        X, Y = grid.mesh
        pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
        out = (interp_re(pts) + 1j * interp_im(pts)).reshape(grid.shape)
        return WaveField(grid, out, field.m)
    raise GeometryError(f"resampling {src.kind.value} -> {grid.kind.value} is not supported")
