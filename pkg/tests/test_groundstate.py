import math

import numpy as np
import pytest

from lhyvortex.functionals import energy, hdot_norm_sq, lebesgue, mass
from lhyvortex.geometry import GeometryError, Grid, seed_field
from lhyvortex.groundstate import (
    OMEGA_STAR,
    FlowOptions,
    GroundStateError,
    ShootingError,
    ThresholdMethod,
    critical_mass,
    default_cylindrical_grid,
    energy_curve,
    energy_sign,
    euler_lagrange_residual,
    gradient_flow_step,
    qm_on_grid,
    rayleigh_omega,
    shoot_qm,
    solve_ground_state,
)

from oracles import townes_mass

SMALL = Grid.radial(1000, 40.0)


def test_qm0_matches_townes_oracle(qm):
    assert math.isclose(qm[0].mass, townes_mass(), rel_tol=1e-6)


@pytest.mark.parametrize("m", [0, 1, 2])
def test_qm_is_positive_discrete_solution(qm, m):
    q = qm[m]
    assert q.residual < 1e-10
    assert np.all(q.profile.values.real > 0)
    assert abs(q.mass_h - q.mass_half_h) / q.mass < 1e-4
    assert q.gn_constant == 1.0 / q.mass


@pytest.mark.parametrize("m", [0, 1, 2])
def test_qm_scaling_identities(qm, m):
    # multiplying the profile equation by Q gives Hdot/2 + M = L4 exactly on the grid;
    # the dilation identity L4 = 2M (hence Hdot = 2M) holds up to O(h^2)
    p = qm[m].profile
    mm, hd, l4 = mass(p), hdot_norm_sq(p), lebesgue(p, 4)
    assert abs(0.5 * hd + mm - l4) / l4 < 1e-10
    assert math.isclose(hd, 2 * mm, rel_tol=2e-4)
    assert math.isclose(l4, 2 * mm, rel_tol=2e-4)


def test_qm_masses_increase_with_winding(qm):
    assert qm[0].mass < qm[1].mass < qm[2].mass


def test_shooting_rejects_bad_bracket():
    with pytest.raises(ShootingError):
        shoot_qm(0, lo=10.0, hi=20.0)


def test_qm_on_other_grid():
    q = qm_on_grid(1, Grid.radial(2000, 20.0))
    assert q.values.real.min() > 0 and q.m == 1


def test_flow_step_keeps_mass_and_lowers_energy():
    psi = seed_field(SMALL, 1, 1.0, 2.0)
    rho = 36.0
    from lhyvortex.geometry import normalize_mass

    psi = normalize_mass(psi, rho)
    e0 = energy(psi).total
    nxt = gradient_flow_step(psi, 1, rho, 0.5)
    assert math.isclose(mass(nxt), rho, rel_tol=1e-12)
    assert energy(nxt).total < e0
    with pytest.raises(ValueError):
        gradient_flow_step(psi, 1, rho, 0.0)
    with pytest.raises(GeometryError):
        gradient_flow_step(seed_field(Grid.cartesian(16, 16, 4.0, 4.0), 0, 1.0, 1.0), 0, 1.0, 0.1)


def test_ground_state_small_grid(qm):
    res = solve_ground_state(SMALL, 0, 1.5 * qm[0].mass)
    assert res.converged and res.e_value < 0 and not res.below_threshold
    assert 0 < res.omega < OMEGA_STAR
    assert math.isclose(mass(res.psi), res.rho, rel_tol=1e-12)
    assert abs(rayleigh_omega(res.psi) - res.omega) < 1e-8
    assert np.max(np.abs(euler_lagrange_residual(res.psi, res.omega))) == res.residual
    assert res.residual < 1e-6
    assert res.trace and res.trace[0][0] == 1


def test_ground_state_warm_start_is_faster(qm):
    cold = solve_ground_state(SMALL, 1, 1.5 * qm[1].mass)
    warm = solve_ground_state(SMALL, 1, 1.55 * qm[1].mass, initial=cold.psi)
    assert warm.iterations < cold.iterations


def test_nonconvergence_reports_partial():
    with pytest.raises(GroundStateError) as err:
        solve_ground_state(SMALL, 0, 10.0, FlowOptions(max_iter=3))
    part = err.value.partial
    assert part is not None and part.iterations == 3 and not part.converged


def test_ground_state_input_validation():
    with pytest.raises(ValueError):
        solve_ground_state(SMALL, 0, -1.0)
    with pytest.raises(GeometryError):
        solve_ground_state(Grid.cartesian(16, 16, 4.0, 4.0), 0, 1.0)
    with pytest.raises(GeometryError):
        solve_ground_state(SMALL, 0, 1.0, initial=seed_field(Grid.radial(100, 4.0), 0, 1.0, 1.0))


def test_energy_sign_below_and_above(qm):
    lo = energy_sign(SMALL, 0, 0.7 * qm[0].mass, FlowOptions(tol=1e-8, max_iter=300))
    hi = energy_sign(SMALL, 0, 1.3 * qm[0].mass)
    assert lo.e_value > 0 and lo.below_threshold
    assert hi.e_value < 0


def test_critical_mass_2d_is_qm(qm):
    res = critical_mass(1, 2)
    assert res.method is ThresholdMethod.QM_MASS_2D and res.rho_star == qm[1].mass
    with pytest.raises(ValueError):
        critical_mass(1, 4)


def test_energy_curve_is_decreasing_above_threshold(qm):
    rhos = [q * qm[0].mass for q in (1.3, 1.6, 2.0)]
    pts = energy_curve(SMALL, 0, rhos)
    assert all(p.converged for p in pts)
    es = [p.e_value for p in pts]
    assert es[0] > es[1] > es[2]
    with pytest.raises(ValueError):
        energy_curve(SMALL, 0, [2.0, 1.0])


def test_energy_curve_records_failures():
    pts = energy_curve(SMALL, 0, [10.0], FlowOptions(max_iter=2))
    assert not pts[0].converged and pts[0].error


def test_default_cylindrical_grid():
    g = default_cylindrical_grid(0.5, 10.0)
    assert g.shape == (20, 40) and g.hr == 0.5 and g.hz == 0.5


def test_ground_state_3d_coarse():
    g = default_cylindrical_grid(0.5, 20.0)
    res = solve_ground_state(g, 1, 900.0, FlowOptions(tol=1e-8))
    p = res.psi.values.real
    assert res.converged and res.e_value < 0
    assert np.allclose(p, p[:, ::-1], atol=1e-10)
