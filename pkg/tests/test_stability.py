import numpy as np
import pytest
from hypothesis import given, settings

from conftest import faddeev_leverrier, params_strategy
from pestctl import ModelParams, jacobian
from pestctl.equilibria import (EquilibriumKind, all_equilibria, coexistence_equilibria,
                                healthy_pest_free_equilibria, make_equilibrium)
from pestctl.stability import (Verdict, classify, classify_E0, classify_E1, classify_E3, classify_Estar,
                               cubic_stability_coefficients, eigenvalues, hopf_scan, psi,
                               psi_grid, quartic_coefficients, thresholds, transversality)


def test_thresholds_exact(table1):
    R = thresholds(table1)
    assert R.R0 == pytest.approx(24 / 23, rel=1e-14)
    assert R.R1 == pytest.approx(15 / 274, rel=1e-14)


def test_R0_sign_matches_E1_eigenvalue(table1):
    for m1 in (0.5, 0.8, 0.95):
        p = table1.replace(m1=m1)
        lam2 = (p.m1 * p.alpha * p.K - p.lam * p.omega / p.eta - p.d
                - p.gamma * p.omega / (p.eta + p.omega))
        assert (thresholds(p).R0 > 1) == (lam2 > 0)


def test_R0_linear_in_m1(table1):
    base = thresholds(table1).R0
    assert thresholds(table1.replace(m1=0.4)).R0 == pytest.approx(0.5 * base, rel=1e-14)


def test_eigenvalues_trivial_cases():
    np.testing.assert_allclose(np.sort(eigenvalues(np.diag([3.0, -1.0, 2.0])).real), [-1, 2, 3])
    c = np.polymul([1, 0, 1], np.polymul([1, 2], [1, 3]))
    comp = np.diag(np.ones(3), -1)
    comp[0] = -np.asarray(c[1:], dtype=float)
    w = eigenvalues(comp)
    np.testing.assert_allclose(w, [1j, -1j, -2, -3], atol=1e-12)


def test_E0_unstable_with_witness_r(table1):
    v = classify_E0(table1)
    assert v.verdict is Verdict.UNSTABLE and v.witness == 0.05
    assert v.eigenvalues[0].real == pytest.approx(0.05)


def test_E1_verdicts(table1):
    assert classify_E1(table1).verdict is Verdict.UNSTABLE
    small = table1.replace(alpha=0.005)
    assert max(thresholds(small)) < 1
    assert classify_E1(small).verdict is Verdict.STABLE


def test_E1_marginal_at_threshold(table1):
    p = table1.replace(m1=table1.m1 / thresholds(table1).R0)
    assert abs(thresholds(p).R0 - 1) < 1e-12
    assert classify_E1(p).verdict is Verdict.MARGINAL


def _e3_instances():
    out = []
    for alpha in (0.3, 0.5, 0.9):
        p = ModelParams.table1().replace(alpha=alpha)
        out += [(p, eq) for eq in healthy_pest_free_equilibria(p)]
    return out


@pytest.mark.parametrize("p,eq", _e3_instances())
def test_E3_cubic_factor(p, eq):
    J = jacobian(p, eq.state)
    rep = classify_E3(p, eq)
    assert rep.F22 == J[1, 1]
    assert np.all(J[1, [0, 2, 3]] == 0.0)
    w = eigenvalues(J)
    rest = np.delete(w, np.argmin(np.abs(w - rep.F22)))
    cubic = np.roots([1.0, rep.C1, rep.C2, rep.C3])
    np.testing.assert_allclose(np.sort_complex(cubic), np.sort_complex(rest), rtol=1e-6, atol=1e-12)
    assert rep.stable == bool(np.all(w.real < 0))


@pytest.mark.xfail(strict=True, reason="published C2 (and C3 with its X^3 + a denominator) "
                                       "differ from the characteristic polynomial")
@pytest.mark.parametrize("p,eq", _e3_instances())
def test_E3_verbatim_cubic(p, eq):
    good = cubic_stability_coefficients(p, eq.state)
    bad = cubic_stability_coefficients(p, eq.state, "verbatim")
    np.testing.assert_allclose(bad, good, rtol=1e-6)


def _estar_instances():
    out = []
    for alpha in (0.025, 0.05, 0.2, 0.5):
        p = ModelParams.table1().replace(alpha=alpha)
        out += [(p, eq) for eq in coexistence_equilibria(p, cross_check=False)]
    return out


@pytest.mark.parametrize("p,eq", _estar_instances())
def test_quartic_matches_characteristic_polynomial(p, eq):
    J = jacobian(p, eq.state)
    y = quartic_coefficients(p, eq)
    np.testing.assert_allclose(y.monic(), faddeev_leverrier(J), rtol=1e-8)
    assert y.y1 == pytest.approx(-np.trace(J), rel=1e-12)
    assert y.y4 == pytest.approx(np.linalg.det(J), rel=1e-8)


@pytest.mark.xfail(strict=True, reason="published y2, y3, y4 differ from the characteristic polynomial")
@pytest.mark.parametrize("p,eq", _estar_instances())
def test_quartic_verbatim(p, eq):
    np.testing.assert_allclose(quartic_coefficients(p, eq, "verbatim"), quartic_coefficients(p, eq),
                               rtol=1e-6)


def test_verbatim_y1_is_exact(table1):
    (eq,) = coexistence_equilibria(table1, cross_check=False)
    assert quartic_coefficients(table1, eq, "verbatim").y1 == pytest.approx(
        quartic_coefficients(table1, eq).y1, rel=1e-12)


def test_table1_coexistence_stable(table1):
    (eq,) = coexistence_equilibria(table1, cross_check=False)
    v = classify_Estar(table1, eq)
    assert v.verdict is Verdict.STABLE and all(v.details["conditions"].values())


def test_psi_boundary_is_marginal(table1):
    p = table1.replace(K=5.0)
    (h, _) = hopf_scan(p, (0.05, 1.5), 30)
    q = p.replace(alpha=h.alpha_star)
    eq = make_equilibrium(EquilibriumKind.COEXISTENCE, q, h.equilibrium)
    assert classify_Estar(q, eq).verdict is Verdict.MARGINAL


@settings(max_examples=30, deadline=None)
@given(params_strategy())
def test_classifiers_agree_with_eigenvalues(p):
    # classify raises ConsistencyError if Routh-Hurwitz and eigenvalues disagree
    for eq in all_equilibria(p):
        v = classify(p, eq)
        w = eigenvalues(jacobian(p, eq.state))
        if v.verdict is Verdict.STABLE:
            assert np.all(w.real < 0)
        elif v.verdict is Verdict.UNSTABLE:
            assert np.any(w.real > 0)
        if eq.kind is EquilibriumKind.COEXISTENCE:
            y = quartic_coefficients(p, eq)
            assert v.details["conditions"]["psi>0"] == (y.psi() > 0)


def test_psi_matches_classifier_condition(table1):
    p = table1.replace(K=5.0)
    for alpha in (0.07, 0.3):
        q = p.replace(alpha=alpha)
        (eq,) = coexistence_equilibria(q, cross_check=False)
        assert (psi(p, alpha) > 0) == classify_Estar(q, eq).details["conditions"]["psi>0"]


def test_psi_continuous_along_grid(table1):
    p = table1.replace(K=5.0)
    alphas = np.linspace(0.05, 1.5, 60)
    _, vals = psi_grid(p, alphas)
    v = np.array(vals, dtype=float)
    jumps = np.abs(np.diff(v))
    # second differences stay small compared with first differences
    assert np.all(np.abs(np.diff(v, 2)) <= 4 * jumps[:-1] + 4 * jumps[1:] + 1e-18)


def test_hopf_scan_without_sign_change(table1):
    found = hopf_scan(table1.replace(K=5.0), (0.2, 0.8), 10)
    assert len(found) == 0 and found.skipped == []


def test_hopf_points_grid_independent(table1):
    p = table1.replace(K=5.0)
    a = hopf_scan(p, (0.05, 1.5), 30)
    b = hopf_scan(p, (0.05, 1.5), 47)
    assert len(a) == len(b) == 2
    for x, y in zip(a, b):
        assert abs(x.alpha_star - y.alpha_star) <= 1e-10 * x.alpha_star


def test_hopf_first_point(table1):
    (h, _) = hopf_scan(table1.replace(K=5.0), (0.05, 1.5), 30)
    assert h.alpha_star == pytest.approx(0.0999984, rel=1e-5)
    assert h.imag_part_omega0 == pytest.approx(0.043075, rel=1e-4)
    assert h.eigen_crossing_verified and h.observed_slope > 0


def test_transversality_at_pure_imaginary_pair():
    # rho^4 + y1 rho^3 + y2 rho^2 + y3 rho + y4 with roots +-i w, -p, -q
    w, pp, q = 0.3, 1.0, 2.0
    c = np.polymul([1, 0, w ** 2], np.polymul([1, pp], [1, q]))
    y = c[1:]
    A, B, C, D = transversality(y, np.zeros(4), 0.0, w)
    assert A == pytest.approx(-3 * y[0] * w ** 2 + y[2])
    assert B == pytest.approx(-4 * w ** 3 + 2 * y[1] * w)
    assert C == 0.0 and D == 0.0
