import dataclasses
import math

import numpy as np
import pytest

from conftest import fd_jacobian
from satim.dynamics import (
    TABLE_I,
    ImInputs,
    ImState,
    equilibrium_locked_rotor,
    equilibrium_with_load,
    equilibrium_zero_stator_speed,
    rhs,
)
from satim.magnetics import J, TABLE_II_LINEAR, TABLE_II_SATURATED, GenericInvariantEnergy, rotation
from satim.observability import (
    PerUnitBase,
    analyze,
    build_linearized,
    build_M,
    build_O,
    build_O_extended,
    build_Os,
    build_Os_extended,
    build_Os_prime,
    condition_number,
    condition_sweep,
    kalman_observability,
    numerical_rank,
    per_unit_Os,
)

SAT, LIN = TABLE_II_SATURATED, TABLE_II_LINEAR
ALPHA = 1 / (2 * 0.96) + 1 / (2 * 0.12)
BETA = 1 / (2 * 0.96) - 1 / (2 * 0.12)
U = np.array([20.0, 0.0])


# rank and condition helpers


def test_identity():
    assert numerical_rank(np.eye(4)) == 4
    assert condition_number(np.eye(4)) == 1.0


def test_diagonal_condition():
    assert condition_number(np.diag([10.0, 1.0])) == pytest.approx(10.0, rel=1e-15)


def test_outer_product_rank(rng):
    assert numerical_rank(np.outer(rng.normal(size=4), rng.normal(size=4))) == 1


def test_singular_condition_is_infinite():
    assert condition_number(np.array([[1.0, 0.0], [0.0, 0.0]])) == math.inf


# M, O


@pytest.mark.parametrize("ws, wg", [(0.0, 0.0), (2 * math.pi * 5, 2 * math.pi * 5)])
def test_M_linear_closed_form(ws, wg):
    eq = equilibrium_locked_rotor(np.array([1.0, 0.0]), ws, LIN, TABLE_I)
    mm = build_M(eq, TABLE_I)
    rr = TABLE_I.Rr
    omega_r = rr * (BETA - ALPHA**2 / BETA) * np.eye(2)
    np.testing.assert_allclose(mm.X_r, J, atol=1e-12)
    np.testing.assert_allclose(mm.Omega_r, omega_r, atol=1e-10)
    np.testing.assert_allclose(mm.M, BETA * omega_r + ALPHA * J * ws - ALPHA * J * wg, atol=1e-9)
    np.testing.assert_allclose(mm.v, [0.0, BETA], atol=1e-12)
    if ws == 0.0:
        assert mm.M[0, 1] == pytest.approx(0.0, abs=1e-12)
        assert mm.M[0, 0] == pytest.approx(mm.M[1, 1], rel=1e-14)


def test_O_layout():
    eq = equilibrium_zero_stator_speed(1.27, 2.0, SAT, TABLE_I)
    mm = build_M(eq, TABLE_I)
    o = build_O(eq, TABLE_I, mm)
    assert o.shape == (6, 6)
    np.testing.assert_array_equal(o[0:2, 0:2], eq.Hss)
    np.testing.assert_array_equal(o[2:4, 0:2], -mm.M)
    np.testing.assert_array_equal(o[2:4, 4], mm.v)
    np.testing.assert_allclose(o[4:6, 5], TABLE_I.n_pole_pairs / TABLE_I.Jl * mm.v)
    assert numerical_rank(o[0:4, 0:4]) == 4


def test_rank_O_is_5_on_zero_stator_speed_line():
    eq = equilibrium_zero_stator_speed(1.27, 2.0, SAT, TABLE_I)
    assert numerical_rank(build_O(eq, TABLE_I)) == 5
    assert numerical_rank(build_O_extended(eq, TABLE_I)) == 5


def test_rank_O_is_6_away_from_the_line():
    eq = equilibrium_locked_rotor(np.array([1.27, 0.0]), 2 * math.pi * 50, SAT, TABLE_I)
    assert numerical_rank(build_O(eq, TABLE_I)) == 6


@pytest.mark.parametrize("ws, expected", [(0.0, 5), (2 * math.pi * 3, 6), (-2 * math.pi * 7, 6)])
def test_rank_O_agrees_with_kalman_oracle(ws, expected):
    eq = equilibrium_with_load(1.0, ws, 1.5, SAT, TABLE_I)
    assert numerical_rank(build_O(eq, TABLE_I)) == expected
    assert numerical_rank(kalman_observability(eq, TABLE_I, n_blocks=4)) == expected


# linearization


def test_A_matches_finite_difference_jacobian():
    eq = equilibrium_with_load(1.1, 2 * math.pi * 4, 2.0, SAT, TABLE_I)
    lin = build_linearized(eq, U, TABLE_I, SAT)
    us = np.asarray(eq.inputs.us)

    def f(x):
        return rhs(x, us, eq.inputs.omega_s, eq.inputs.Tl, SAT, TABLE_I)[0]

    x0 = eq.state.to_array()
    jac = fd_jacobian(f, x0, h=1e-6)
    np.testing.assert_allclose(lin.A[:4], jac[:4], atol=1e-5 * np.abs(jac[:4]).max())
    np.testing.assert_array_equal(lin.A[4], 0.0)
    np.testing.assert_allclose(f(x0), 0.0, atol=1e-8)


def test_C_and_Cv():
    eq = equilibrium_zero_stator_speed(1.27, 1.0, SAT, TABLE_I)
    lin = build_linearized(eq, U, TABLE_I, SAT)
    np.testing.assert_array_equal(lin.C[:, 0:2], eq.Hss)
    np.testing.assert_array_equal(lin.C[:, 2:4], eq.Hsr)

    def hss_u(z):
        return SAT.hessian_blocks(z[:2], z[2:])[0] @ U

    fd = fd_jacobian(hss_u, np.r_[eq.state.phis, eq.state.phir], h=1e-5)
    np.testing.assert_allclose(lin.Cv[:, :4], fd, rtol=1e-5, atol=1e-6)
    np.testing.assert_array_equal(lin.Cv[:, 4], 0.0)


def test_linear_Cv_vanishes():
    eq = equilibrium_zero_stator_speed(1.27, 1.0, LIN, TABLE_I)
    np.testing.assert_array_equal(build_linearized(eq, U, TABLE_I, LIN).Cv, 0.0)


def test_Os_dimensions_and_ranks():
    for model, expected in ((SAT, 5), (LIN, 4)):
        eq = equilibrium_zero_stator_speed(1.27, 0.0, model, TABLE_I)
        lin = build_linearized(eq, U, TABLE_I, model)
        os_, osp = build_Os(lin), build_Os_prime(lin)
        assert os_.shape == (8, 5) and osp.shape == (5, 5)
        if model is SAT:
            assert numerical_rank(os_) == 5
        else:
            assert numerical_rank(os_) <= 4
        np.testing.assert_array_equal(osp[4], (lin.C @ lin.A)[1])


def test_Os_with_load_torque_column():
    eq = equilibrium_zero_stator_speed(1.27, 2.0, SAT, TABLE_I)
    assert numerical_rank(build_Os_extended(eq, U, TABLE_I, SAT)) == 6
    eq = equilibrium_zero_stator_speed(1.27, 2.0, LIN, TABLE_I)
    assert numerical_rank(build_Os_extended(eq, U, TABLE_I, LIN)) == 5


# reports and sweeps


def test_analyze_reports():
    rep = analyze(equilibrium_zero_stator_speed(1.27, 0.0, SAT, TABLE_I), SAT, TABLE_I)
    assert rep.rank_O == 5 and rep.rank_Os == 5
    assert 1.0 <= rep.cond_Os < math.inf
    assert 1.0 <= rep.cond_Os_prime < math.inf
    rep = analyze(equilibrium_zero_stator_speed(1.27, 0.0, LIN, TABLE_I), LIN, TABLE_I)
    assert rep.rank_Os <= 4
    assert rep.cond_Os == math.inf


def test_per_unit_scaling():
    eq = equilibrium_zero_stator_speed(1.27, 1.0, SAT, TABLE_I)
    base = PerUnitBase()
    lin = build_linearized(eq, U, TABLE_I, SAT)
    os_ = build_Os(lin)
    pu = per_unit_Os(os_, base)
    i_b, w_b, f_b = base.current, base.speed, base.flux
    assert f_b == pytest.approx(400 / (2 * math.pi * 50))
    assert pu[0, 0] == pytest.approx(os_[0, 0] * f_b / i_b)
    assert pu[7, 4] == pytest.approx(os_[7, 4] * w_b / (i_b * w_b**2))
    assert numerical_rank(pu) == numerical_rank(os_) == 5
    rep = analyze(eq, SAT, TABLE_I, per_unit=base)
    assert rep.cond_Os == pytest.approx(condition_number(pu), rel=1e-12)


def test_rank_and_condition_are_rotation_invariant():
    eq = equilibrium_zero_stator_speed(1.27, 2.5, SAT, TABLE_I)
    r = rotation(0.9)
    rot = dataclasses.replace(
        eq,
        state=ImState(r @ eq.state.phis, r @ eq.state.phir, eq.state.omega),
        inputs=ImInputs(r @ eq.inputs.us, eq.inputs.omega_s, eq.inputs.Tl),
        is_=r @ eq.is_,
        ir=r @ eq.ir,
        Hss=r @ eq.Hss @ r.T,
        Hsr=r @ eq.Hsr @ r.T,
        Hrr=r @ eq.Hrr @ r.T,
    )
    a = analyze(eq, SAT, TABLE_I, U)
    b = analyze(rot, SAT, TABLE_I, r @ U)
    assert (a.rank_O, a.rank_Os) == (b.rank_O, b.rank_Os)
    assert b.cond_Os == pytest.approx(a.cond_Os, rel=1e-6)
    # Os' picks the q row, which is frame dependent, so only Os is compared


def test_condition_sweep_flags_failed_points():
    # no stator-rotor coupling: every equilibrium solve fails, and the sweep keeps going
    degenerate = GenericInvariantEnergy(lambda u1, u2, u3: u1 + u3, lambda u1, u2, u3: (1.0, 0.0, 1.0))
    rows = condition_sweep([0.5, 1.27], [0.0, 2.0], U, degenerate, TABLE_I)
    assert len(rows) == 4
    assert not any(r.feasible for r in rows)
    assert all(math.isnan(r.cond_Os) and r.rank_O == -1 for r in rows)


def test_condition_sweep_row_per_grid_point():
    rows = condition_sweep([0.64, 1.27], [-5.0, 0.0, 5.0], U, SAT, TABLE_I)
    assert [(r.flux, r.Tl) for r in rows] == [(f, t) for f in (0.64, 1.27) for t in (-5.0, 0.0, 5.0)]
    assert all(r.feasible and math.isfinite(r.cond_Os) for r in rows)


def test_condition_sweep_linear_is_infinite():
    rows = condition_sweep([0.64, 1.27], [-2.0, 0.0, 2.0], U, LIN, TABLE_I)
    assert all(r.feasible and r.cond_Os == math.inf for r in rows)
