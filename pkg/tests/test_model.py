import numpy as np
import pytest
from hypothesis import given, settings

from conftest import PUBLISHED_S0, fd_jacobian, params_strategy, states
from pestctl import ControlTriple, ModelParams, jacobian, rhs, rhs_controlled
from pestctl.errors import InvariantViolation, NumericDomainError, SingularityError

# exact rational evaluation of the uncontrolled field at the initial state
RHS_AT_S0 = np.array([587 / 80000, -1127 / 600000, -233 / 48000, -27 / 10000])


def test_table1_defaults():
    p = ModelParams.table1()
    assert (p.r, p.K, p.lam, p.d, p.m1, p.m2) == (0.05, 1.0, 0.025, 0.01, 0.8, 0.6)
    assert (p.delta, p.a, p.alpha, p.sigma, p.gamma, p.eta, p.omega) == (
        0.1, 0.2, 0.025, 0.015, 0.025, 0.015, 0.003)
    assert p.phi == 0.5


def test_rhs_at_initial_state_matches_exact_value(table1):
    np.testing.assert_allclose(rhs(table1, PUBLISHED_S0), RHS_AT_S0, rtol=1e-14, atol=0)


@pytest.mark.parametrize("s", [(0, 0, 0, 0.2), (1, 0, 0, 0.2)])
def test_rhs_vanishes_at_closed_form_equilibria(table1, s):
    assert np.max(np.abs(rhs(table1, s))) <= 1e-15


def test_unit_controls_reproduce_uncontrolled(table1):
    np.testing.assert_array_equal(rhs_controlled(table1, PUBLISHED_S0, (1, 1, 1)), rhs(table1, PUBLISHED_S0))


def test_zero_controls_remove_control_terms(table1):
    p = table1
    X, S, I, A = PUBLISHED_S0
    f = rhs_controlled(p, PUBLISHED_S0, ControlTriple(0, 0, 0))
    assert f[1] == pytest.approx(p.m1 * p.alpha * X * S - p.d * S, rel=1e-14)
    assert f[3] == pytest.approx(p.sigma * (S + I) - p.eta * A, rel=1e-14)


def test_jacobian_matches_finite_differences(table1):
    J = jacobian(table1, PUBLISHED_S0)
    fd = fd_jacobian(lambda s: rhs(table1, s), PUBLISHED_S0)
    np.testing.assert_allclose(J, fd, rtol=1e-6, atol=1e-10)


def test_jacobian_at_E0_is_diagonal_block(table1):
    p = table1
    J = jacobian(p, (0, 0, 0, p.omega / p.eta))
    g = p.gamma * p.omega / (p.eta + p.omega)
    np.testing.assert_allclose(np.diag(J), [p.r, -p.lam * p.omega / p.eta - p.d - g,
                                            -p.d - p.delta - g, -p.eta], rtol=1e-14)


def test_singular_crop_level_raises():
    p = ModelParams.table1()
    with pytest.raises(SingularityError):
        rhs(p, (-p.a, 0.1, 0.1, 0.1))


def test_nonfinite_parameters_rejected():
    with pytest.raises(InvariantViolation):
        ModelParams(alpha=float("nan"))


@pytest.mark.parametrize("change", [dict(m1=0.3, m2=0.6), dict(r=-0.1), dict(phi=1.2), dict(K=0.0)])
def test_validate_rejects_invalid(change):
    with pytest.raises(InvariantViolation):
        ModelParams.table1().replace(**change).validate()


@settings(max_examples=60, deadline=None)
@given(params_strategy(), states())
def test_jacobian_row4_constant(p, s):
    J = jacobian(p, s)
    np.testing.assert_array_equal(J[3], [0.0, p.sigma, p.sigma, -p.eta])


@settings(max_examples=60, deadline=None)
@given(params_strategy(), states())
def test_faces_of_orthant_are_invariant(p, s):
    # on each face the corresponding component cannot decrease
    for j in range(4):
        t = s.copy()
        t[j] = 0.0
        f = rhs(p, t)
        assert f[j] >= -1e-15


@settings(max_examples=60, deadline=None)
@given(params_strategy(), states())
def test_pest_free_subspace_invariant(p, s):
    s = s.copy()
    s[1] = s[2] = 0.0
    f = rhs(p, s)
    assert f[1] == 0.0 and f[2] == 0.0


@settings(max_examples=40, deadline=None)
@given(params_strategy(), states())
def test_jacobian_matches_fd_property(p, s):
    s = s + 0.01
    np.testing.assert_allclose(jacobian(p, s), fd_jacobian(lambda x: rhs(p, x), s),
                               rtol=1e-5, atol=1e-9)


def test_nonfinite_state_raises(table1):
    with pytest.raises(NumericDomainError):
        rhs(table1, (np.inf, 0.1, 0.1, 0.1))
