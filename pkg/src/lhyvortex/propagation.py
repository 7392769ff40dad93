"""Time integration of the cubic-quartic NLS.

Both schemes are Strang splittings around the pointwise nonlinear phase
rotation ``u -> u exp(i tau (|u|^2 - |u|^3))``:

* ``StrangFFT`` on the periodic Cartesian grid, with the exact spectral
  free-Schroedinger propagator in the middle;
* ``StrangCN`` on radial/cylindrical grids, with a Crank-Nicolson step for
  ``A + m^2/(2 r^2)``. The centrifugal potential sits inside the implicit
  solve: it is stiff near the axis (``~ 2 m^2 / h^2`` at the first node), and
  splitting it off as a phase costs orders of magnitude in accuracy.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .functionals import angular_momentum, energy, mass, momentum, variance
from .geometry import GeometryError, Grid, GridKind, WaveField
from .operators import ShiftedSolver, apply_kinetic, centrifugal_potential

TIMESERIES_COLUMNS = (
    "t", "mass", "kinetic", "centrifugal", "quartic", "quintic", "energy_total",
    "px", "py", "angmom", "variance", "linf",
)


class Scheme(str, enum.Enum):
    STRANG_FFT = "StrangFFT"
    STRANG_CN = "StrangCN"


class Flow(str, enum.Enum):
    PLAIN_NLS = "PlainNLS"
    INVERSE_SQUARE = "InverseSquare"


class PropagationError(RuntimeError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class PropagatorConfig:
    dt: float
    t_end: float
    scheme: Scheme = Scheme.STRANG_FFT
    snapshot_stride: int = 0
    diagnostics_stride: int = 1
    cubic_only: bool = False

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        n = round(self.t_end / self.dt)
        if abs(n * self.dt - self.t_end) > 1e-9 * max(self.t_end, self.dt):
            raise ValueError(f"t_end={self.t_end} is not an integer multiple of dt={self.dt}")
        if self.diagnostics_stride < 1 or self.snapshot_stride < 0:
            raise ValueError("strides must be positive (snapshot_stride 0 disables snapshots)")
        object.__setattr__(self, "scheme", Scheme(self.scheme))

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))


def _phase(values: np.ndarray, tau: float, cubic_only: bool) -> np.ndarray:
    a = np.abs(values)
    rate = a * a if cubic_only else a * a - a * a * a
    return values * np.exp(1j * tau * rate)


def _check(values: np.ndarray, step: int | None, stage: str) -> None:
    if not np.all(np.isfinite(values)):
        raise PropagationError(f"non-finite values after {stage} substep" + (f" of step {step}" if step is not None else ""), step)


def strang_step_fft(u: WaveField, dt: float, cubic_only: bool = False, step: int | None = None) -> WaveField:
    """One Strang step ``N(dt/2) K(dt) N(dt/2)`` on the periodic Cartesian grid."""
    grid = u.grid
    if grid.kind is not GridKind.CARTESIAN_2D:
        raise GeometryError("strang_step_fft needs a Cartesian2D field")
    kx, ky = grid.wavenumbers
    v = _phase(u.values, 0.5 * dt, cubic_only)
    _check(v, step, "nonlinear")
    v = np.fft.ifft2(np.exp(-0.5j * dt * (kx * kx + ky * ky)) * np.fft.fft2(v))
    _check(v, step, "kinetic")
    v = _phase(v, 0.5 * dt, cubic_only)
    _check(v, step, "nonlinear")
    return WaveField(grid, v, u.m)


class CrankNicolson:
    """Cached Cayley step ``(I + i dt/2 H)^{-1} (I - i dt/2 H)`` with ``H = A + V``."""

    def __init__(self, grid: Grid, m: int, dt: float, include_potential: bool = True):
        self.grid = grid
        self.m = m
        self.dt = dt
        self.potential = centrifugal_potential(grid, m) if include_potential else np.zeros(grid.shape)
        self.solver = ShiftedSolver(grid, m, 0.5j * dt, include_potential)

    def __call__(self, values: np.ndarray) -> np.ndarray:
        h = apply_kinetic(self.grid, values) + self.potential * values
        return self.solver.solve(values - 0.5j * self.dt * h)


_CN_CACHE: dict = {}


def _cn(grid: Grid, m: int, dt: float, include_potential: bool) -> CrankNicolson:
    key = (grid, m, dt, include_potential)
    cn = _CN_CACHE.get(key)
    if cn is None:
        if len(_CN_CACHE) > 16:
            _CN_CACHE.clear()
        cn = _CN_CACHE[key] = CrankNicolson(grid, m, dt, include_potential)
    return cn


def strang_step_radial(
    psi: WaveField,
    m: int | None,
    dt: float,
    include_potential: bool = True,
    cubic_only: bool = False,
    step: int | None = None,
) -> WaveField:
    """One Strang step with a Crank-Nicolson linear substep on radial/cylindrical grids."""
    grid = psi.grid
    if not grid.is_radial:
        raise GeometryError("strang_step_radial needs a Radial2D or Cylindrical3D field")
    m = psi.m if m is None else m
    cn = _cn(grid, m, dt, include_potential)
    v = _phase(psi.values, 0.5 * dt, cubic_only)
    _check(v, step, "nonlinear")
    v = cn(v)
    _check(v, step, "linear")
    v = _phase(v, 0.5 * dt, cubic_only)
    _check(v, step, "nonlinear")
    return WaveField(grid, v, m)


# ---------------------------------------------------------------------------
# trajectories


def diagnostics_row(t: float, u: WaveField, include_potential: bool = True) -> dict:
    grid = u.grid
    eb = energy(u, u.m, include_potential=include_potential and grid.is_radial)
    if grid.kind is GridKind.CARTESIAN_2D:
        px, py = momentum(u)
        ang = angular_momentum(u)
    else:
        px = py = 0.0
        ang = -u.m * mass(u)
    return {
        "t": t,
        "mass": mass(u),
        "kinetic": eb.kinetic,
        "centrifugal": eb.centrifugal,
        "quartic": eb.quartic,
        "quintic": eb.quintic,
        "energy_total": eb.total,
        "px": px,
        "py": py,
        "angmom": ang,
        "variance": variance(u),
        "linf": float(np.max(np.abs(u.values))),
    }


@dataclass
class Trajectory:
    config: PropagatorConfig
    flow: Flow
    rows: list[dict] = field(default_factory=list)
    snapshots: list[tuple[float, WaveField]] = field(default_factory=list)
    final: WaveField | None = None
    completed: bool = False
    error: str | None = None
    failed_step: int | None = None

    def series(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    @property
    def times(self) -> np.ndarray:
        return self.series("t")


def _stepper(u0: WaveField, config: PropagatorConfig, flow: Flow) -> Callable[[WaveField, int], WaveField]:
    grid = u0.grid
    if grid.kind is GridKind.CARTESIAN_2D:
        if flow is not Flow.PLAIN_NLS:
            raise GeometryError("the inverse-square flow runs on radial or cylindrical grids")
        if config.scheme is not Scheme.STRANG_FFT:
            raise GeometryError("Cartesian2D fields use the StrangFFT scheme")
        return lambda u, n: strang_step_fft(u, config.dt, config.cubic_only, n)
    if config.scheme is not Scheme.STRANG_CN:
        raise GeometryError("radial and cylindrical fields use the StrangCN scheme")
    if flow is Flow.PLAIN_NLS and u0.m != 0:
        raise GeometryError("the plain flow on a radial grid is the m = 0 reduction; use InverseSquare for m != 0")
    return lambda u, n: strang_step_radial(u, u.m, config.dt, True, config.cubic_only, n)


def evolve(
    u0: WaveField,
    config: PropagatorConfig,
    flow: Flow | str = Flow.PLAIN_NLS,
    on_snapshot: Callable[[float, WaveField], None] | None = None,
    observer: Callable[[float, WaveField], None] | None = None,
    keep_snapshots: bool = True,
) -> Trajectory:
    """Advance ``u0`` to ``config.t_end``, recording diagnostics every ``diagnostics_stride`` steps.

    A non-finite value aborts the run; the partial trajectory is returned with
    ``completed=False`` and the failing step recorded.
    """
    flow = Flow(flow)
    step = _stepper(u0, config, flow)
    traj = Trajectory(config, flow)

    def record(n: int, u: WaveField) -> None:
        t = n * config.dt
        traj.rows.append(diagnostics_row(t, u))
        if observer is not None:
            observer(t, u)

    def snap(n: int, u: WaveField) -> None:
        t = n * config.dt
        if on_snapshot is not None:
            on_snapshot(t, u)
        if keep_snapshots:
            traj.snapshots.append((t, u))

    u = u0
    record(0, u)
    if config.snapshot_stride:
        snap(0, u)
    for n in range(1, config.steps + 1):
        try:
            u = step(u, n)
        except (PropagationError, GeometryError) as exc:
            traj.error = str(exc)
            traj.failed_step = n
            traj.final = u
            return traj
        if n % config.diagnostics_stride == 0 or n == config.steps:
            record(n, u)
        if config.snapshot_stride and n % config.snapshot_stride == 0:
            snap(n, u)
    traj.final = u
    traj.completed = True
    return traj


@dataclass(frozen=True)
class VarianceReport:
    passed: bool
    margin: float  # min over t of (bound - V) / bound
    ceiling: float  # 2E + C(4/5) M, the a-priori bound on ||grad u||^2
    times: np.ndarray = field(repr=False)
    variance: np.ndarray = field(repr=False)
    bound: np.ndarray = field(repr=False)


def variance_growth_check(traj: Trajectory) -> VarianceReport:
    """Gronwall envelope for the variance.

    ``dV/dt <= 2 ||x u|| ||grad u|| <= V + ||grad u||^2`` and
    ``||grad u||^2 <= K = 2 E + (25/108) M`` give ``V(t) <= e^t V(0) + K (e^t - 1)``.
    """
    if not traj.rows:
        raise ValueError("empty trajectory")
    t = traj.times
    v = traj.series("variance")
    e0 = traj.rows[0]["energy_total"]
    m0 = traj.rows[0]["mass"]
    ceiling = 2.0 * e0 + (25.0 / 108.0) * m0
    bound = np.exp(t) * v[0] + ceiling * np.expm1(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        margins = np.where(bound > 0, (bound - v) / bound, 0.0)
    margin = float(np.min(margins))
    return VarianceReport(bool(np.all(v <= bound * (1 + 1e-12) + 1e-14)), margin, ceiling, t, v, bound)
