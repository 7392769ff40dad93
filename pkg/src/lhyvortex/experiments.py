"""End-to-end studies: orbital stability, collapse arrest and threshold scans."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .functionals import h1m_inner, h1_norm_sq, mass, variance
from .geometry import Grid, GridKind, WaveField, axpy, normalize_mass, scale
from .groundstate import (
    FlowOptions,
    GroundStateResult,
    energy_sign,
    solve_ground_state,
    solve_qm,
)
from .propagation import Flow, PropagatorConfig, Scheme, Trajectory, evolve


def phase_aligned_distance(v: WaveField, psi: WaveField, m: int | None = None) -> float:
    """``min_alpha ||v - e^{i alpha} psi||_{H^1_m}`` in closed form."""
    m = psi.m if m is None else m
    nv = h1_norm_sq(v, m) if v.grid.is_radial else h1_norm_sq(v)
    npsi = h1_norm_sq(psi, m) if psi.grid.is_radial else h1_norm_sq(psi)
    cross = abs(h1m_inner(psi, v, m))
    return math.sqrt(max(nv + npsi - 2.0 * cross, 0.0))


def perturbation_bump(psi: WaveField, m: int | None = None) -> WaveField:
    """Fixed radial bump of unit ``H^1_m`` norm centred at the RMS radius of ``psi``.

    ``chi(r) = (r/s)^|m| exp(-(r - s)^2 / (2 (s/2)^2))`` with ``s`` the RMS radius.
    """
    m = psi.m if m is None else m
    grid = psi.grid
    if grid.kind is not GridKind.RADIAL_2D:
        raise ValueError("the stability study runs on Radial2D grids")
    s = math.sqrt(variance(psi) / mass(psi))
    r = grid.r_nodes
    chi = (r / s) ** abs(m) * np.exp(-((r - s) ** 2) / (0.5 * s * s))
    f = WaveField(grid, chi, m)
    return scale(f, 1.0 / math.sqrt(h1_norm_sq(f, m)))


@dataclass
class StabilityTrace:
    delta: float
    times: list[float]
    distances: list[float]
    sup_distance: float
    ratio_cap: float
    verdict: bool
    m: int
    rho: float
    omega: float
    completed: bool = True
    error: str | None = None
    trajectory: Trajectory | None = field(default=None, repr=False)

    def rows(self) -> list[tuple[float, float]]:
        return list(zip(self.times, self.distances))


def stability_run(
    ground: GroundStateResult,
    delta: float,
    horizon: float,
    dt: float = 0.01,
    stride: int = 10,
    ratio_cap: float = 5.0,
) -> StabilityTrace:
    """Perturb a minimizer by ``delta`` along the fixed bump and track the phase-aligned distance."""
    if delta < 0:
        raise ValueError("delta must be non-negative")
    psi = ground.psi
    m = psi.m
    chi = perturbation_bump(psi, m)
    v0 = normalize_mass(axpy(1.0, psi, delta, chi), ground.rho)
    times: list[float] = []
    dists: list[float] = []

    def observe(t: float, u: WaveField) -> None:
        times.append(t)
        dists.append(phase_aligned_distance(u, psi, m))

    config = PropagatorConfig(dt=dt, t_end=horizon, scheme=Scheme.STRANG_CN, diagnostics_stride=stride)
    flow = Flow.PLAIN_NLS if m == 0 else Flow.INVERSE_SQUARE
    traj = evolve(v0, config, flow, observer=observe, keep_snapshots=False)
    sup = max(dists)
    ok = traj.completed and sup <= ratio_cap * max(delta, 0.0) if delta > 0 else traj.completed
    return StabilityTrace(
        delta, times, dists, sup, ratio_cap, bool(ok), m, ground.rho, ground.omega,
        traj.completed, traj.error, traj,
    )


def stability_study(
    grid: Grid,
    m: int,
    rho_factor: float = 1.5,
    delta: float = 1e-2,
    horizon: float = 20.0,
    dt: float = 0.01,
    stride: int = 10,
    ratio_cap: float = 5.0,
) -> dict:
    """Runs at ``delta`` and ``delta/2``; the response ratio should be about one half."""
    rho = rho_factor * solve_qm(m).mass
    ground = solve_ground_state(grid, m, rho)
    full = stability_run(ground, delta, horizon, dt, stride, ratio_cap)
    half = stability_run(ground, 0.5 * delta, horizon, dt, stride, ratio_cap)
    return {
        "ground": ground,
        "full": full,
        "half": half,
        "halving_ratio": half.sup_distance / full.sup_distance,
    }


# ---------------------------------------------------------------------------
# collapse arrest


@dataclass
class CollapseReport:
    mass: float
    energy0: float
    ceiling: float  # 2 E(u0) + (25/108) M(u0), bound on ||grad u||^2 under the full flow
    grad0: float
    cubic_times: np.ndarray = field(repr=False)
    cubic_grad: np.ndarray = field(repr=False)
    lhy_times: np.ndarray = field(repr=False)
    lhy_grad: np.ndarray = field(repr=False)
    cubic_growth: float = 0.0
    cubic_blowup_time: float | None = None
    cubic_aborted: bool = False
    lhy_max_ratio: float = 0.0  # max_t ||grad u||^2 / ceiling
    cubic_verdict: bool = False
    lhy_verdict: bool = False
    growth_factor: float = 10.0
    ceiling_slack: float = 0.01

    @property
    def passed(self) -> bool:
        return self.cubic_verdict and self.lhy_verdict


def gaussian_data(grid: Grid, total_mass: float, sigma: float = 1.0) -> WaveField:
    x, y = grid.mesh
    u = np.exp(-(x * x + y * y) / (2.0 * sigma * sigma))
    return normalize_mass(WaveField(grid, u.astype(np.complex128), 0), total_mass)


def ceiling(energy0: float, mass0: float) -> float:
    return 2.0 * energy0 + (25.0 / 108.0) * mass0


def collapse_arrest_run(
    mass_factor: float = 1.5,
    horizon: float = 20.0,
    cubic_horizon: float = 5.0,
    grid: Grid | None = None,
    dt: float = 0.005,
    stride: int = 10,
    growth_factor: float = 10.0,
    ceiling_slack: float = 0.01,
) -> CollapseReport:
    """Identical Gaussian data under the pure cubic flow and under the full flow."""
    grid = grid or Grid.cartesian(256, 256, 20.0, 20.0)
    m_q = solve_qm(0).mass
    u0 = gaussian_data(grid, mass_factor * m_q)
    cubic = evolve(u0, PropagatorConfig(dt, cubic_horizon, Scheme.STRANG_FFT, diagnostics_stride=stride, cubic_only=True),
                   Flow.PLAIN_NLS, keep_snapshots=False)
    full = evolve(u0, PropagatorConfig(dt, horizon, Scheme.STRANG_FFT, diagnostics_stride=stride),
                  Flow.PLAIN_NLS, keep_snapshots=False)
    e0 = full.rows[0]["energy_total"]
    m0 = full.rows[0]["mass"]
    ceil = ceiling(e0, m0)
    cg = np.sqrt(2.0 * cubic.series("kinetic"))
    lg2 = 2.0 * full.series("kinetic")
    g0 = float(cg[0])
    crossed = np.flatnonzero(cg > growth_factor * g0)
    blow = float(cubic.times[crossed[0]]) if crossed.size else None
    aborted = not cubic.completed
    cubic_ok = blow is not None or aborted
    lhy_ratio = float(np.max(lg2) / ceil) if ceil > 0 else math.inf
    return CollapseReport(
        mass=m0,
        energy0=e0,
        ceiling=ceil,
        grad0=g0,
        cubic_times=cubic.times,
        cubic_grad=cg,
        lhy_times=full.times,
        lhy_grad=np.sqrt(lg2),
        cubic_growth=float(np.max(cg) / g0),
        cubic_blowup_time=blow,
        cubic_aborted=aborted,
        lhy_max_ratio=lhy_ratio,
        cubic_verdict=bool(cubic_ok),
        lhy_verdict=bool(full.completed and lhy_ratio <= 1.0 + ceiling_slack),
        growth_factor=growth_factor,
        ceiling_slack=ceiling_slack,
    )


# ---------------------------------------------------------------------------
# threshold scans


@dataclass
class SignScan:
    m: int
    qm_mass: float
    factors: list[float]
    energies: list[float]
    bracket: tuple[float, float] | None

    @property
    def passed(self) -> bool:
        if self.bracket is None:
            return False
        lo, hi = self.bracket
        return lo >= (1 - 0.02) * self.qm_mass and hi <= (1 + 0.02) * self.qm_mass


def energy_sign_scan(m: int, grid: Grid, factors=(0.98, 1.02), opts: FlowOptions | None = None) -> SignScan:
    """Sign of the minimal energy at ``factor * ||Q_m||^2``; the bracket is the last sign change."""
    qm = solve_qm(m).mass
    energies = []
    for f in factors:
        res = energy_sign(grid, m, f * qm, opts or FlowOptions(tol=1e-9, max_iter=40_000))
        energies.append(res.e_value)
    bracket = None
    for (f0, e0), (f1, e1) in zip(zip(factors, energies), zip(factors[1:], energies[1:])):
        if e0 >= 0 > e1:
            bracket = (f0 * qm, f1 * qm)
    return SignScan(m, qm, list(factors), energies, bracket)
