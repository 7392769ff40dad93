"""Mass-constrained energy minimization and the cubic reference profile Q_m.

The minimizer of the vortex energy at fixed mass is computed with a normalized
gradient flow. Each pseudo-time step solves

    (I + dtau (A + V + |psi_n|^3 - psi_n^2)) psi* = psi_n

and rescales ``psi*`` back onto the mass sphere. Treating the nonlinearity
implicitly through a frozen coefficient keeps the step well conditioned for
``dtau`` of order one, where the fully explicit nonlinearity stalls. ``dtau``
grows geometrically while the energy decreases and is halved on any increase.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from .functionals import energy, hdot_norm_sq, lebesgue, mass
from .geometry import GeometryError, Grid, GridKind, WaveField, normalize_mass, seed_field
from .operators import (
    ShiftedSolver,
    SolverError,
    apply_kinetic,
    centrifugal_potential,
    gradient_norm_sq,
    radial_stencil,
)

log = logging.getLogger(__name__)

OMEGA_STAR = 25.0 / 216.0


class GroundStateError(RuntimeError):
    """Raised when the flow does not converge; ``partial`` holds the last iterate."""

    def __init__(self, message: str, partial: "GroundStateResult | None" = None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class FlowOptions:
    tol: float = 1e-10
    max_iter: int = 200_000
    dtau0: float = 0.1
    dtau_max: float | None = None  # 20 on Radial2D, 5 on Cylindrical3D when None
    growth: float = 1.1
    energy_slack: float = 1e-12
    dtau_min: float = 1e-12
    seed_width: float = 2.0
    omega_cap: float = 0.5  # dtau <= omega_cap / omega keeps the shifted system away from singularity
    stop_when_negative: bool = False
    pcg_tol: float = 1e-12
    trace_stride: int = 50

    def resolved_dtau_max(self, grid: Grid) -> float:
        if self.dtau_max is not None:
            return self.dtau_max
        return 5.0 if grid.kind is GridKind.CYLINDRICAL_3D else 20.0


@dataclass
class GroundStateResult:
    psi: WaveField
    omega: float
    rho: float
    e_value: float
    iterations: int
    final_update: float
    residual: float
    converged: bool = True
    below_threshold: bool = False
    trace: list[tuple[int, float, float, float]] = field(default_factory=list, repr=False)

    @property
    def m(self) -> int:
        return self.psi.m


# ---------------------------------------------------------------------------
# single step


def _energy_parts(grid: Grid, p: np.ndarray, m: int) -> tuple[float, float]:
    """Return ``(E_m, omega)`` for a real profile without building a WaveField."""
    w = grid.weights
    kin = 0.5 * gradient_norm_sq(grid, p, fast=True)
    cent = float(np.sum(w * centrifugal_potential(grid, m) * p * p)) if m else 0.0
    p2 = p * p
    l4 = float(np.sum(w * p2 * p2))
    l5 = float(np.sum(w * p2 * p2 * np.abs(p)))
    mm = float(np.sum(w * p2))
    e = kin + cent - 0.5 * l4 + 0.4 * l5
    omega = (l4 - l5 - (kin + cent)) / mm if mm > 0 else 0.0
    return e, omega


def _flow_solve(grid: Grid, m: int, p: np.ndarray, dtau: float, rho: float, pcg_tol: float) -> np.ndarray:
    solver = ShiftedSolver(grid, m, dtau)
    q = solver.solve(p, extra=np.abs(p) ** 3 - p * p, tol=pcg_tol)
    mq = float(np.sum(grid.weights * q * q))
    if not mq > 0:
        raise SolverError("gradient-flow step annihilated the field")
    return q * math.sqrt(rho / mq)


def gradient_flow_step(psi: WaveField, m: int, rho: float, dtau: float, pcg_tol: float = 1e-12) -> WaveField:
    """One normalized semi-implicit gradient-flow step (real profiles)."""
    if not dtau > 0:
        raise ValueError("dtau must be positive")
    if not psi.grid.is_radial:
        raise GeometryError("the gradient flow runs on Radial2D or Cylindrical3D grids")
    q = _flow_solve(psi.grid, m, psi.values.real.copy(), dtau, rho, pcg_tol)
    return WaveField(psi.grid, q, m)


# ---------------------------------------------------------------------------
# diagnostics


def extract_omega(psi: WaveField, m: int | None = None) -> float:
    """Frequency from the first Pohozaev balance: ``(L4 - L5 - Hdot/2) / M``."""
    m = psi.m if m is None else m
    mm = mass(psi)
    if not mm > 0:
        raise ValueError("omega is undefined for a zero field")
    return (lebesgue(psi, 4) - lebesgue(psi, 5) - 0.5 * hdot_norm_sq(psi, m)) / mm


def rayleigh_omega(psi: WaveField, m: int | None = None) -> float:
    """Frequency as the multiplier ``-<psi, (A + V) psi + f(psi)> / M`` using the operator itself."""
    m = psi.m if m is None else m
    g = psi.grid
    v = psi.values
    lin = apply_kinetic(g, v) + centrifugal_potential(g, m) * v
    a = np.abs(v)
    val = np.sum(g.weights * np.conj(v) * (lin - a * a * v + a**3 * v)).real
    return -float(val) / mass(psi)


def euler_lagrange_residual(psi: WaveField, omega: float, m: int | None = None) -> np.ndarray:
    """``(A + V) psi - psi^3 + |psi|^3 psi + omega psi`` at every node."""
    m = psi.m if m is None else m
    g = psi.grid
    v = psi.values.real
    return apply_kinetic(g, v) + centrifugal_potential(g, m) * v - v**3 + np.abs(v) ** 3 * v + omega * v


# ---------------------------------------------------------------------------
# ground-state driver


def solve_ground_state(
    grid: Grid,
    m: int,
    rho: float,
    opts: FlowOptions | None = None,
    initial: WaveField | None = None,
) -> GroundStateResult:
    """Minimize the vortex energy at mass ``rho`` by the normalized gradient flow."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    if not grid.is_radial:
        raise GeometryError("ground states are computed on Radial2D or Cylindrical3D grids")
    opts = opts or FlowOptions()
    if initial is None:
        p = seed_field(grid, m, 1.0, opts.seed_width).values.real
    else:
        if initial.grid != grid:
            raise GeometryError("initial guess lives on a different grid")
        p = np.abs(initial.values)
    p = p * math.sqrt(rho / float(np.sum(grid.weights * p * p)))
    dtau = opts.dtau0
    cap = opts.resolved_dtau_max(grid)
    e, omega = _energy_parts(grid, p, m)
    trace: list[tuple[int, float, float, float]] = []
    it = 0
    change = math.inf
    converged = False
    while it < opts.max_iter:
        if omega > 0:
            dtau = min(dtau, opts.omega_cap / omega)
        try:
            q = _flow_solve(grid, m, p, dtau, rho, opts.pcg_tol)
        except SolverError:
            dtau *= 0.5
            if dtau < opts.dtau_min:
                raise
            continue
        e_new, omega_new = _energy_parts(grid, q, m)
        if e_new > e + opts.energy_slack * max(abs(e), 1.0):
            dtau *= 0.5
            if dtau < opts.dtau_min:
                raise GroundStateError(
                    f"pseudo-time step underflow at iteration {it}",
                    _finish(grid, m, rho, p, it, change, trace, converged=False),
                )
            continue
        change = float(np.max(np.abs(q - p))) / dtau
        p, e, omega = q, e_new, omega_new
        it += 1
        if it % opts.trace_stride == 0 or it == 1:
            trace.append((it, dtau, e, change))
        if change < opts.tol:
            converged = True
            break
        if opts.stop_when_negative and e < 0:
            break
        dtau = min(dtau * opts.growth, cap)
    result = _finish(grid, m, rho, p, it, change, trace, converged)
    if not converged and not (opts.stop_when_negative and e < 0):
        raise GroundStateError(
            f"gradient flow did not converge in {it} iterations (update {change:.3e})", result
        )
    return result


def _finish(grid, m, rho, p, it, change, trace, converged) -> GroundStateResult:
    psi = WaveField(grid, np.abs(p), m)
    omega = extract_omega(psi, m)
    e_value = energy(psi, m).total
    res = float(np.max(np.abs(euler_lagrange_residual(psi, omega, m))))
    return GroundStateResult(
        psi=psi,
        omega=omega,
        rho=rho,
        e_value=e_value,
        iterations=it,
        final_update=change,
        residual=res,
        converged=converged,
        below_threshold=e_value >= 0,
        trace=trace,
    )


# ---------------------------------------------------------------------------
# cubic reference profile


@dataclass(frozen=True)
class QmResult:
    m: int
    profile: WaveField
    mass: float  # Richardson extrapolation of the two grid masses
    mass_h: float
    mass_half_h: float
    slope: float  # leading near-axis coefficient a in Q ~ a r^|m|
    residual: float  # sup-norm of the discrete profile-equation residual
    shooting_radius: float

    @property
    def gn_constant(self) -> float:
        return 1.0 / self.mass


class ShootingError(RuntimeError):
    pass


def _shoot(m: int, a: float, r0: float, r_end: float):
    """Integrate the profile ODE from the axis; return (+1 overshoot, -1 undershoot, 0 neither)."""
    am = abs(m)
    c = 2.0 / (4 * am + 4)
    q0 = a * r0**am * (1 + c * r0 * r0)
    dq0 = a * (am * r0 ** (am - 1) if am else 0.0) + a * c * (am + 2) * r0 ** (am + 1)

    def rhs(r, y):
        return [y[1], -y[1] / r + (2.0 + m * m / (r * r)) * y[0] - 2.0 * y[0] ** 3]

    def crossing(r, y):
        return y[0]

    def turning(r, y):
        return y[1]

    crossing.terminal = True
    turning.terminal = True
    turning.direction = 1
    sol = solve_ivp(rhs, (r0, r_end), [q0, dq0], method="DOP853", rtol=1e-13, atol=1e-15,
                    events=[crossing, turning], dense_output=True)
    if sol.t_events[0].size:
        return 1, sol
    if sol.t_events[1].size:
        return -1, sol
    return 0, sol


def shoot_qm(m: int, lo: float = 0.05, hi: float = 20.0, r0: float = 1e-3, r_end: float = 40.0):
    """Bisect the near-axis slope between undershoot (turns up) and overshoot (crosses zero)."""
    s_lo, _ = _shoot(m, lo, r0, r_end)
    s_hi, _ = _shoot(m, hi, r0, r_end)
    if s_lo != -1 or s_hi != 1:
        raise ShootingError(f"shooting bracket [{lo}, {hi}] does not separate under/overshoot for m={m}")
    sol = None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        s, sol_mid = _shoot(m, mid, r0, r_end)
        if s > 0:
            hi = mid
        else:
            lo = mid
            sol = sol_mid
        if hi - lo <= 4e-16 * hi:
            break
    if sol is None:
        _, sol = _shoot(m, lo, r0, r_end)
    return 0.5 * (lo + hi), sol


def _discrete_qm(grid: Grid, m: int, guess: np.ndarray, tol: float = 1e-13, max_iter: int = 50) -> tuple[np.ndarray, float]:
    """Newton polish of ``(A + V + 1) Q - Q^3 = 0`` on the radial grid."""
    st = radial_stencil(grid.nr, grid.r_max)
    v = centrifugal_potential(grid, m)
    q = guess.copy()
    for _ in range(max_iter):
        f = st.apply(q) + (v + 1.0) * q - q**3
        res = float(np.max(np.abs(f)))
        if res < tol:
            break
        ab = np.zeros((3, grid.nr))
        ab[0, 1:] = st.upper
        ab[1] = st.diag + v + 1.0 - 3.0 * q * q
        ab[2, :-1] = st.lower
        q = q - solve_banded((1, 1), ab, f)
    f = st.apply(q) + (v + 1.0) * q - q**3
    return q, float(np.max(np.abs(f)))


def _profile_on(grid: Grid, m: int, a: float, sol) -> np.ndarray:
    """Sample the shooting solution; beyond the trusted range continue with the linear decay."""
    r = grid.r_nodes
    r_cut = sol.t[-1]
    # trust the trajectory up to where it is still decaying monotonically
    ts = np.linspace(sol.t[0], r_cut, 4000)
    ys = sol.sol(ts)[0]
    k = int(np.argmin(np.abs(ys))) if np.any(ys <= 0) else len(ts) - 1
    r_trust = ts[max(int(0.8 * k), 1)]
    out = np.zeros_like(r)
    inside = r <= r_trust
    near = r < sol.t[0]
    out[inside] = sol.sol(np.clip(r[inside], sol.t[0], None))[0]
    out[near] = a * r[near] ** abs(m)
    q_t = float(sol.sol(r_trust)[0])
    outside = ~inside
    out[outside] = q_t * np.sqrt(r_trust / r[outside]) * np.exp(-math.sqrt(2.0) * (r[outside] - r_trust))
    return out


@lru_cache(maxsize=16)
def solve_qm(m: int, nr: int = 4000, r_max: float = 20.0) -> QmResult:
    """Ground state of ``-1/2 Delta Q + (1 + m^2/(2 r^2)) Q - Q^3 = 0`` on Radial2D(nr, r_max).

    The profile is found by shooting and then polished by Newton's method on the
    discrete grid. The same is done on the grid with half the spacing; the
    reported ``mass`` is the Richardson extrapolation of the two grid masses.
    """
    a, sol = shoot_qm(m)
    grid = Grid.radial(nr, r_max)
    fine = Grid.radial(2 * nr, r_max)
    q, res = _discrete_qm(grid, m, _profile_on(grid, m, a, sol))
    qf, _ = _discrete_qm(fine, m, _profile_on(fine, m, a, sol))
    if np.any(q < -1e-12) or np.any(qf < -1e-12):
        raise ShootingError("Newton polish left the positive ground state")
    mh = float(np.sum(grid.weights * q * q))
    mh2 = float(np.sum(fine.weights * qf * qf))
    return QmResult(
        m=m,
        profile=WaveField(grid, q, m),
        mass=(4.0 * mh2 - mh) / 3.0,
        mass_h=mh,
        mass_half_h=mh2,
        slope=a,
        residual=res,
        shooting_radius=float(sol.t[-1]),
    )


def qm_on_grid(m: int, grid: Grid) -> WaveField:
    """Q_m polished on an arbitrary Radial2D grid."""
    a, sol = shoot_qm(m)
    q, _ = _discrete_qm(grid, m, _profile_on(grid, m, a, sol))
    return WaveField(grid, q, m)


# ---------------------------------------------------------------------------
# thresholds and energy curves


class ThresholdMethod(str, enum.Enum):
    QM_MASS_2D = "QmMass2D"
    ENERGY_SIGN_BISECT_3D = "EnergySignBisect3D"


@dataclass
class ThresholdResult:
    rho_star: float
    method: ThresholdMethod
    qm_mass: float | None = None
    bracket: tuple[float, float] | None = None
    scan: list[tuple[float, float]] = field(default_factory=list)
    minimizers: dict = field(default_factory=dict, repr=False)


class ThresholdError(RuntimeError):
    def __init__(self, message: str, scan: list[tuple[float, float]]):
        super().__init__(f"{message}; scan: {scan}")
        self.scan = scan


def default_cylindrical_grid(h: float = 0.4, size: float = 30.0) -> Grid:
    n = int(round(size / h))
    return Grid.cylindrical(n, 2 * n, size, size)


def energy_sign(
    grid: Grid, m: int, rho: float, opts: FlowOptions | None = None, initial: WaveField | None = None
) -> GroundStateResult:
    """Run the flow until either the energy turns negative or the iterate converges."""
    base = opts or FlowOptions(tol=1e-8, max_iter=20_000)
    opts = replace(base, stop_when_negative=True)
    try:
        return solve_ground_state(grid, m, rho, opts, initial)
    except GroundStateError as exc:
        if exc.partial is None:
            raise
        return exc.partial


def critical_mass(
    m: int,
    d: int,
    grid: Grid | None = None,
    rho_start: float = 100.0,
    rel_width: float = 0.01,
    opts: FlowOptions | None = None,
) -> ThresholdResult:
    """Existence threshold for minimizers.

    In 2D it is the mass of Q_m. In 3D the sign of the minimal energy is
    bisected, each evaluation being a (warm-started) gradient-flow run.
    """
    if d == 2:
        qm = solve_qm(m)
        return ThresholdResult(qm.mass, ThresholdMethod.QM_MASS_2D, qm_mass=qm.mass)
    if d != 3:
        raise ValueError("dimension must be 2 or 3")
    grid = grid or default_cylindrical_grid()
    scan: list[tuple[float, float]] = []
    runs: dict[float, GroundStateResult] = {}

    def probe(rho: float, warm: WaveField | None) -> GroundStateResult:
        res = energy_sign(grid, m, rho, opts, warm)
        scan.append((rho, res.e_value))
        runs[rho] = res
        log.info("threshold probe rho=%.6g e=%.6g iterations=%d", rho, res.e_value, res.iterations)
        return res

    lo = hi = None
    warm = None
    rho = rho_start
    for _ in range(16):
        res = probe(rho, warm)
        if res.e_value < 0:
            hi = rho
            warm_hi = res.psi
            break
        lo = rho
        rho *= 2.0
    if hi is None:
        raise ThresholdError("no negative-energy mass found while expanding the bracket", scan)
    if lo is None:
        rho = hi
        for _ in range(16):
            rho *= 0.5
            res = probe(rho, warm_hi)
            if res.e_value >= 0:
                lo = rho
                break
            hi, warm_hi = rho, res.psi
        if lo is None:
            raise ThresholdError("no non-negative-energy mass found while expanding the bracket", scan)
    while (hi - lo) / hi > rel_width:
        mid = 0.5 * (lo + hi)
        res = probe(mid, warm_hi)
        if res.e_value < 0:
            hi, warm_hi = mid, res.psi
        else:
            lo = mid
    return ThresholdResult(
        0.5 * (lo + hi), ThresholdMethod.ENERGY_SIGN_BISECT_3D, bracket=(lo, hi), scan=scan, minimizers=runs
    )


@dataclass
class CurvePoint:
    rho: float
    e_value: float
    omega: float
    converged: bool
    error: str | None = None
    result: GroundStateResult | None = field(default=None, repr=False)


def energy_curve(
    grid: Grid, m: int, rho_list, opts: FlowOptions | None = None, warm_start: bool = True
) -> list[CurvePoint]:
    """Minimal energy along ascending masses, warm-starting each solve from the previous profile."""
    rhos = [float(r) for r in rho_list]
    if any(r <= 0 for r in rhos) or any(b < a for a, b in zip(rhos, rhos[1:])):
        raise ValueError("rho_list must be positive and ascending")
    out: list[CurvePoint] = []
    warm = None
    for rho in rhos:
        try:
            res = solve_ground_state(grid, m, rho, opts, warm if warm_start else None)
            out.append(CurvePoint(rho, res.e_value, res.omega, True, result=res))
            warm = res.psi
        except (GroundStateError, SolverError) as exc:
            partial = getattr(exc, "partial", None)
            out.append(
                CurvePoint(
                    rho,
                    partial.e_value if partial else math.nan,
                    partial.omega if partial else math.nan,
                    False,
                    str(exc),
                    partial,
                )
            )
    return out
