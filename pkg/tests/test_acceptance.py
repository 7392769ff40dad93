"""Acceptance criteria, one test (or group) per criterion.

Each test records a PASS/FAIL line that is printed in the ``acceptance``
section of the terminal summary.
"""

import math

import numpy as np
import pytest

from lhyvortex.experiments import collapse_arrest_run, energy_sign_scan, stability_run
from lhyvortex.functionals import lebesgue, mass, peter_paul_constant
from lhyvortex.geometry import Grid, WaveField, resample
from lhyvortex.groundstate import (
    OMEGA_STAR,
    FlowOptions,
    critical_mass,
    default_cylindrical_grid,
    solve_ground_state,
)
from lhyvortex.propagation import Flow, PropagatorConfig, Scheme, evolve, strang_step_fft
from lhyvortex.verify import (
    GN3D_PREFACTOR_DERIVED,
    gn_check_2d,
    gn_check_3d,
    gn_ratio_2d,
    mass_bound,
    omega_star_numeric,
    pohozaev,
)

from oracles import townes_mass

pytestmark = pytest.mark.slow

PARTS: dict[str, dict[str, tuple[bool, str]]] = {}


def part(acceptance, crit: str, name: str, ok: bool, detail: str) -> bool:
    """Record one sub-check; the criterion line is the conjunction of its parts."""
    PARTS.setdefault(crit, {})[name] = (bool(ok), detail)
    parts = PARTS[crit]
    acceptance(crit, all(v[0] for v in parts.values()), "; ".join(f"{k} {v[1]}" for k, v in parts.items()))
    return bool(ok)


# ---------------------------------------------------------------------------
# 1, 2: constants


def test_criterion_1_frequency_bound(acceptance):
    value, s = omega_star_numeric()
    ok = abs(value - 25 / 216) < 1e-10 and abs(s - 5 / 6) < 1e-8
    part(acceptance, "1", "omega*", ok, f"max={value:.15f} s={s:.12f}")
    assert ok


def test_criterion_2_peter_paul(acceptance):
    c, _ = peter_paul_constant()
    rng = np.random.default_rng(20240601)
    grids = [Grid.radial(200, 10.0), Grid.cartesian(32, 32, 8.0, 8.0)]
    worst = math.inf
    for k in range(1000):
        g = grids[k % 2]
        shape = g.shape
        if k % 4 < 2:
            amp = rng.uniform(0.0, 3.0) * rng.random(shape)
        else:  # near the extremal level |u| = 5/6
            amp = 5.0 / 6.0 + rng.normal(scale=10.0 ** rng.uniform(-8, -1), size=shape)
        u = WaveField(g, amp * np.exp(2j * np.pi * rng.random(shape)))
        lhs = -0.5 * lebesgue(u, 4) + 0.4 * lebesgue(u, 5)
        rhs = -(25.0 / 216.0) * mass(u)
        worst = min(worst, (lhs - rhs) / max(mass(u), 1e-300))
    ok_c = abs(c - 25 / 108) < 1e-10
    ok_f = worst >= -1e-14
    part(acceptance, "2", "constant", ok_c, f"{c:.15f}")
    part(acceptance, "2", "1000 fields", ok_f, f"min (lhs-rhs)/M={worst:.3e}")
    assert ok_c and ok_f


# ---------------------------------------------------------------------------
# 3: Q_m fixture


def test_criterion_3_qm(acceptance, qm):
    q = qm[0]
    halving = abs(q.mass_h - q.mass_half_h) / q.mass_half_h
    oracle = abs(q.mass - townes_mass()) / q.mass
    ok = halving < 1e-4 and q.residual < 1e-8 and oracle < 1e-3
    part(acceptance, "3", "Q0", ok, f"mass={q.mass:.10f} halving={halving:.1e} residual={q.residual:.1e} townes={oracle:.1e}")
    assert ok


# ---------------------------------------------------------------------------
# 4: 2D ground states


@pytest.mark.parametrize("m", [0, 1, 2])
def test_criterion_4_ground_states(acceptance, ground_2d, qm, m):
    res = ground_2d[m]
    rep = pohozaev(res.psi, m, res.omega)
    mb = mass_bound(res.psi, m, qm[m].mass)
    ok = (
        res.converged
        and res.e_value < 0
        and rep.res1 < 1e-6
        and rep.res2 < 1e-6
        and 0 < res.omega < OMEGA_STAR
        and rep.gamma > 1
        and rep.l5_identity_residual < 1e-5
        and mb.passed
    )
    part(acceptance, "4", f"m={m}", ok,
         f"e={res.e_value:.6f} omega={res.omega:.6f} res2={rep.res2:.1e} gamma={rep.gamma:.4f} l5={rep.l5_identity_residual:.1e}")
    assert ok


# ---------------------------------------------------------------------------
# 5: 2D threshold by energy sign


@pytest.mark.parametrize("m", [0, 1])
def test_criterion_5_energy_sign_scan(acceptance, m):
    scan = energy_sign_scan(m, Grid.radial(8000, 400.0))
    detail = f"e(0.98)={scan.energies[0]:.2e} e(1.02)={scan.energies[1]:.2e}"
    part(acceptance, "5", f"m={m}", scan.passed, detail)
    assert scan.passed


# ---------------------------------------------------------------------------
# 6: 3D ground state and threshold relation

RHO_3D = 700.0
FAMILY = (1.02, 1.1, 1.25, 1.5, 2.0)


@pytest.fixture(scope="module")
def three_d():
    coarse = default_cylindrical_grid(0.4, 30.0)
    threshold = critical_mass(1, 3, grid=coarse)
    family, warm = [], None
    for f in FAMILY:
        r = solve_ground_state(coarse, 1, f * threshold.rho_star, FlowOptions(tol=1e-9), initial=warm)
        family.append(r.psi)
        warm = r.psi
    prev = None
    for h in (0.4, 0.2, 0.1, 0.05):
        g = default_cylindrical_grid(h, 30.0)
        init = resample(prev.psi, g) if prev is not None else None
        prev = solve_ground_state(g, 1, RHO_3D, FlowOptions(tol=1e-9), initial=init)
    return {"threshold": threshold, "family": family, "fine": prev}


def test_criterion_6_ground_state(acceptance, three_d):
    th, res = three_d["threshold"], three_d["fine"]
    rep = pohozaev(res.psi, 1, res.omega)
    p = res.psi.values.real
    half = p.shape[1] // 2
    rise = max(float(np.max(np.diff(p[:, half:], axis=1))), float(np.max(-np.diff(p[:, :half], axis=1))))
    ok = (
        RHO_3D > th.rho_star
        and res.converged
        and res.e_value < 0
        and rep.res1 < 1e-5
        and rep.res2 < 1e-5
        and rise <= 1e-8
    )
    part(acceptance, "6", "ground state", ok,
         f"rho*={th.rho_star:.2f} res2={rep.res2:.1e} res_combined={rep.res_combined:.1e} z-rise={rise:.1e}")
    assert ok


@pytest.mark.xfail(strict=True, reason="the stated 3D prefactor 7/675^(1/5) does not follow from the scaling argument")
def test_criterion_6_threshold_relation_stated(acceptance, three_d):
    th = three_d["threshold"]
    rep = gn_check_3d(three_d["family"], 1, th.rho_star)
    err = rep.extra["relation_error_stated"]
    part(acceptance, "6", "K relation", err < 0.03,
         f"K={rep.max_ratio:.6f} implies rho*={rep.extra['rho_implied_stated']:.1f} ({100 * err:.1f}% off, tol 3%)")
    assert err < 0.03


def test_threshold_relation_with_derived_prefactor(acceptance, three_d):
    th = three_d["threshold"]
    rep = gn_check_3d(three_d["family"], 1, th.rho_star)
    err = rep.extra["relation_error_derived"]
    # informational: the same check with c = (500/27)^(1/5)
    acceptance("6 (derived prefactor, not part of 6)", err < 0.03 and rep.passed,
               f"c={GN3D_PREFACTOR_DERIVED:.5f} implies rho*={rep.extra['rho_implied_derived']:.1f} ({100 * err:.2f}% off)")
    assert rep.passed
    assert err < 0.03


# ---------------------------------------------------------------------------
# 7: propagator


def test_criterion_7_propagator(acceptance):
    g = Grid.cartesian(128, 128, 20.0, 20.0)
    x, y = g.mesh
    u0 = WaveField(g, 1.2 * np.exp(-(x * x + y * y) / 2) * np.exp(0.3j * x))

    def run(dt, t=1.0):
        u = u0
        for _ in range(int(round(t / dt))):
            u = strang_step_fft(u, dt)
        return u.values

    a, b, c = run(0.02), run(0.01), run(0.005)
    order = math.log2(np.max(np.abs(a - b)) / np.max(np.abs(b - c)))
    ok_order = abs(order - 2.0) <= 0.2
    part(acceptance, "7", "order", ok_order, f"{order:.4f}")

    u = WaveField(g, c)
    back = strang_step_fft(strang_step_fft(u, 0.01), -0.01)
    rev = float(np.max(np.abs(back.values - c)))
    part(acceptance, "7", "reversibility", rev < 1e-10, f"{rev:.1e}")

    traj = evolve(u0, PropagatorConfig(0.01, 100.0, Scheme.STRANG_FFT, diagnostics_stride=500))
    ms = traj.series("mass")
    drift_c = float(np.max(np.abs(ms - ms[0])) / ms[0])
    part(acceptance, "7", "mass drift cartesian", drift_c < 1e-11, f"{drift_c:.1e}/1e4 steps")

    gr = Grid.radial(2000, 40.0)
    r = gr.r_nodes
    traj = evolve(WaveField(gr, 1.5 * np.exp(-r * r / 2)), PropagatorConfig(0.01, 100.0, Scheme.STRANG_CN, diagnostics_stride=500))
    ms = traj.series("mass")
    drift_r = float(np.max(np.abs(ms - ms[0])) / ms[0])
    part(acceptance, "7", "mass drift radial", drift_r < 1e-9, f"{drift_r:.1e}/1e4 steps")

    drifts = []
    for dt in (0.04, 0.02, 0.01, 0.005):
        tr = evolve(WaveField(g, np.exp(-(x * x + y * y) / 2) + 0j), PropagatorConfig(dt, 2.0, Scheme.STRANG_FFT))
        e = tr.series("energy_total")
        drifts.append(float(np.max(np.abs(e - e[0]))))
    ratios = [drifts[i] / drifts[i + 1] for i in range(3)]
    ok_e = all(3.6 <= q <= 4.4 for q in ratios)
    part(acceptance, "7", "energy drift ratios", ok_e, "/".join(f"{q:.3f}" for q in ratios))
    assert ok_order and rev < 1e-10 and drift_c < 1e-11 and drift_r < 1e-9 and ok_e


# ---------------------------------------------------------------------------
# 8: solitary waves


@pytest.mark.parametrize("m", [0, 1])
def test_criterion_8_solitary_wave(acceptance, ground_dyn, m):
    gs = ground_dyn[m]
    psi = gs.psi.values.real
    j = int(np.argmax(psi))
    sup, ts, ph = [0.0], [], []

    def watch(t, u):
        sup[0] = max(sup[0], float(np.max(np.abs(np.abs(u.values) - psi))))
        ts.append(t)
        ph.append(float(np.angle(u.values[j])))

    flow = Flow.INVERSE_SQUARE if m else Flow.PLAIN_NLS
    tr = evolve(gs.psi, PropagatorConfig(0.01, 10.0, Scheme.STRANG_CN, diagnostics_stride=10), flow, observer=watch)
    rate = float(np.polyfit(ts, np.unwrap(ph), 1)[0])
    ok = tr.completed and sup[0] < 1e-4 and abs(rate - gs.omega) < 1e-3
    part(acceptance, "8", f"m={m}", ok, f"sup={sup[0]:.1e} rate-omega={rate - gs.omega:.1e}")
    assert ok


# ---------------------------------------------------------------------------
# 9: orbital stability


@pytest.mark.parametrize("m", [0, 1])
def test_criterion_9_orbital_stability(acceptance, ground_dyn, m):
    full = stability_run(ground_dyn[m], 1e-2, 20.0)
    half = stability_run(ground_dyn[m], 5e-3, 20.0)
    ratio = half.sup_distance / full.sup_distance
    ok = full.verdict and half.verdict and 0.3 <= ratio <= 0.8
    part(acceptance, "9", f"m={m}", ok, f"sup={full.sup_distance:.2e} (cap 5e-2) halving={ratio:.3f}")
    assert ok


# ---------------------------------------------------------------------------
# 10: collapse arrest


def test_criterion_10_collapse_arrest(acceptance):
    rep = collapse_arrest_run()
    blow = "NaN abort" if rep.cubic_aborted else f"t={rep.cubic_blowup_time}"
    part(acceptance, "10", "runs", rep.passed, f"cubic 10x at {blow}; full max/ceiling={rep.lhy_max_ratio:.4f}")
    assert rep.passed


# ---------------------------------------------------------------------------
# 11: angular momentum


def test_criterion_11_angular_momentum(acceptance, qm, radial_fine):
    gs = solve_ground_state(radial_fine, 1, 3.0 * qm[1].mass)
    u0 = resample(gs.psi, Grid.cartesian(256, 256, 90.0, 90.0))
    tr = evolve(u0, PropagatorConfig(0.01, 10.0, Scheme.STRANG_FFT, diagnostics_stride=50))
    ang, ms = tr.series("angmom"), tr.series("mass")
    drift = float(np.max(np.abs(ang - ang[0])) / abs(ang[0]))
    lm = float(ang[0] / ms[0])
    ok = tr.completed and drift < 1e-6 and abs(lm + 1.0) < 1e-4
    part(acceptance, "11", "m=1", ok, f"L/M={lm:.12f} (literal convention gives -m) drift={drift:.1e}")
    assert ok


# ---------------------------------------------------------------------------
# 12: GN sweep


def random_fields(grid, m, n, seed):
    rng = np.random.default_rng(seed)
    r = grid.r_nodes
    out = []
    for _ in range(n):
        v = np.zeros_like(r)
        for _ in range(rng.integers(1, 5)):
            c, s, a = rng.uniform(0.0, 4.0), rng.uniform(0.3, 2.5), rng.uniform(-1.0, 2.0)
            v += a * (r / s) ** abs(m) * np.exp(-((r - c) ** 2) / (2 * s * s))
        out.append(WaveField(grid, v, m))
    return out


@pytest.mark.parametrize("m", [0, 1, 2])
def test_criterion_12_gn_sweep(acceptance, qm, m):
    q = qm[m]
    grid = q.profile.grid
    rep = gn_check_2d(random_fields(grid, m, 100, 1000 + m), m, q.mass)
    at_q = gn_ratio_2d(q.profile, m)
    c_m = 1.0 / q.mass
    ok = rep.passed and abs(at_q - c_m) / c_m < 1e-3
    part(acceptance, "12", f"m={m}", ok,
         f"max ratio/C_m={rep.max_ratio / c_m:.4f} ratio(Q)/C_m-1={(at_q - c_m) / c_m:.1e}")
    assert ok
