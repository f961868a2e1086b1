
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import PUBLISHED_S0, params_strategy, states
from pestctl import ModelParams, jacobian
from pestctl.control import (ObjectiveWeights, adjoint_rhs, control_hessian, evaluate_constant, fbsm,
                             objective, pmp_control, pmp_control_unclamped, running_cost)
from pestctl.errors import GridMismatch, NotConverged
from pestctl.integrate import (ControlSchedule, TimeGrid, Trajectory, integrate_adjoint_backward,
                               integrate_forward)

W = ObjectiveWeights()
GRID60 = TimeGrid.from_step(60.0, 0.05)


@pytest.fixture(scope="module")
def sweep():
    return fbsm(ModelParams.table1(), W, PUBLISHED_S0, GRID60)


def test_published_weights():
    assert tuple(W) == (0.8, 0.5, 0.5, 10.0, 10.0)
    with pytest.raises(ValueError):
        ObjectiveWeights(0.0, 0.5, 0.5, 10, 10).validate()


def test_objective_trivial_cases(table1):
    g = TimeGrid.from_step(10.0, 0.1)
    zero_u = ControlSchedule.constant(g, (0, 0, 0))
    traj = integrate_forward(table1, PUBLISHED_S0, g, zero_u)
    assert objective(table1, ObjectiveWeights(0.8, 0.5, 0.5, 0, 0), traj, zero_u) == 0.0
    flat = Trajectory(g, np.tile([0.5, 0.0, 0.3, 0.0], (len(g), 1)))
    one_u = ControlSchedule.constant(g, (1, 1, 1))
    assert objective(table1, W, flat, one_u) == pytest.approx(10.0 * (0.8 + 0.5 + 0.5) / 2, rel=1e-12)
    with pytest.raises(GridMismatch):
        objective(table1, W, flat, ControlSchedule.constant(GRID60, (1, 1, 1)))


def test_running_cost_signs():
    row = np.array([0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0])
    assert running_cost(W, row) == pytest.approx(W.Q - W.R)


def test_pmp_zero_costate_gives_zero_control(table1):
    assert pmp_control(table1, W, PUBLISHED_S0, np.zeros(4)) == (0.0, 0.0, 0.0)


def test_pmp_upper_clamp_boundary(table1):
    lam = np.array([0.0, 0.0, 0.0, -W.P3 / table1.omega])
    assert pmp_control_unclamped(table1, W, PUBLISHED_S0, lam)[2] == pytest.approx(1.0, rel=1e-15)
    assert pmp_control(table1, W, PUBLISHED_S0, lam).u3 == 1.0
    assert pmp_control(table1, W, PUBLISHED_S0, 2 * lam).u3 == 1.0


def test_control_hessian_is_diag_P(table1):
    H = control_hessian(table1, W, PUBLISHED_S0, [1.0, -2.0, 0.5, -3.0], [0.4, 0.4, 0.4])
    np.testing.assert_allclose(H, np.diag([W.P1, W.P2, W.P3]), atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(params_strategy(), states(), st.lists(st.floats(-50, 50), min_size=4, max_size=4))
def test_pmp_control_admissible(p, s, lam):
    u = pmp_control(p, W, s, np.array(lam))
    assert all(0.0 <= v <= 1.0 for v in u)


@settings(max_examples=50, deadline=None)
@given(params_strategy(), states(), st.lists(st.floats(-5, 5), min_size=4, max_size=4),
       st.lists(st.floats(0, 1), min_size=3, max_size=3))
def test_adjoint_rhs_is_transposed_jacobian(p, s, lam, u):
    lam = np.array(lam)
    grad = np.array([0.0, 2 * W.Q * s[1], 0.0, -2 * W.R * s[3]])
    expected = -jacobian(p, s, u).T @ lam - grad
    np.testing.assert_allclose(adjoint_rhs(p, W, s, lam, u), expected, rtol=1e-12, atol=1e-12)


def _rk4_adjoint_oracle(p, state, u, w):
    n = len(state) - 1
    h = 60.0 / n
    lam = np.zeros((n + 1, 4))
    for k in range(n, 0, -1):
        s1, s0 = state[k], state[k - 1]
        u1, u0 = u[k], u[k - 1]
        sm, um = 0.5 * (s1 + s0), 0.5 * (u1 + u0)
        f = lambda s_, l_, u_: adjoint_rhs(p, w, s_, l_, u_)
        k1 = f(s1, lam[k], u1)
        k2 = f(sm, lam[k] - 0.5 * h * k1, um)
        k3 = f(sm, lam[k] - 0.5 * h * k2, um)
        k4 = f(s0, lam[k] - h * k3, u0)
        lam[k - 1] = lam[k] - h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return lam


def test_backward_sweep_matches_scalar_oracle(table1):
    g = TimeGrid.from_step(60.0, 0.5)
    rng = np.random.default_rng(1)
    u = ControlSchedule(g, rng.uniform(0, 1, (len(g), 3)))
    traj = integrate_forward(table1, PUBLISHED_S0, g, u)
    lam = integrate_adjoint_backward(table1, traj, u, W)
    np.testing.assert_allclose(lam.values, _rk4_adjoint_oracle(table1, traj.values, u.values, W),
                               rtol=1e-10, atol=1e-12)


def test_sweep_converges_and_beats_constants(table1, sweep):
    assert sweep.converged and sweep.iterations <= 200
    for u in [(0, 0, 0), (1, 1, 1), (0, 0, 1)]:
        assert sweep.objective <= evaluate_constant(table1, W, PUBLISHED_S0, GRID60, u)[1]
    v = sweep.control.values
    assert v.min() >= 0.0 and v.max() <= 1.0
    assert np.all(sweep.adjoint.final == 0.0)


def test_sweep_regression_value(sweep):
    # frozen from this implementation; guards against silent behaviour changes
    assert sweep.objective == pytest.approx(-93.4779665642194, rel=1e-9)
    assert sweep.iterations == 13


def test_quadrature_refinement(sweep):
    f = running_cost(W, np.hstack([sweep.state.values, sweep.control.values]))
    h = GRID60.h
    fine = h * (f.sum() - 0.5 * (f[0] + f[-1]))
    c = f[::2]
    coarse = 2 * h * (c.sum() - 0.5 * (c[0] + c[-1]))
    assert fine == pytest.approx(sweep.objective, rel=1e-15)
    assert abs(fine - coarse) <= 1e-6 * abs(fine)


def test_sweep_tolerance_halving(table1, sweep):
    tight = fbsm(table1, W, PUBLISHED_S0, GRID60, tol=5e-4)
    assert tight.converged
    assert abs(tight.objective - sweep.objective) <= 1e-4 * abs(sweep.objective)
    assert np.max(np.abs(tight.control.values - sweep.control.values)) <= 0.05


def test_no_state_cost_gives_no_control(table1):
    res = fbsm(table1, ObjectiveWeights(0.8, 0.5, 0.5, 0.0, 0.0), PUBLISHED_S0, GRID60)
    assert res.converged
    assert np.all(res.control.values == 0.0) and res.objective == 0.0


def test_nonconvergence_warns_and_returns_best(table1):
    with pytest.warns(NotConverged):
        res = fbsm(table1, W, PUBLISHED_S0, GRID60, max_iter=2)
    assert not res.converged and len(res.history) == 2
    assert res.objective == min(h["objective"] for h in res.history)


@pytest.mark.parametrize("kw", [dict(relaxation=0.0), dict(relaxation=1.5), dict(tol=0.0)])
def test_sweep_argument_checks(table1, kw):
    with pytest.raises(ValueError):
        fbsm(table1, W, PUBLISHED_S0, GRID60, **kw)
