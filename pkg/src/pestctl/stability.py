"""Local stability of the equilibria and Hopf detection in the attack rate.

Every closed-form verdict (thresholds R0/R1, Routh-Hurwitz on the E3 cubic
and the E* quartic) is cross-checked against the eigenvalues of the
analytic Jacobian; a disagreement outside the guard band raises
:class:`ConsistencyError`.

The published C2/C3 and y2..y4 displays do not reproduce the
characteristic polynomial of the Jacobian. The verdicts therefore use
coefficients assembled from the Jacobian entries (``form="corrected"``),
and the published expressions are available as ``form="verbatim"`` so the
deviation can be reported.
"""

import dataclasses
import enum
from typing import NamedTuple, Optional

import numpy as np

from .equilibria import (Equilibrium, EquilibriumKind, axial_equilibrium,
                         coexistence_equilibria, pest_free_equilibrium)
from .equilibria import _newton, _accept_coexistence
from .errors import ConsistencyError, NoCoexistence, NumericDomainError
from .model import ModelParams, jacobian

GUARD_BAND = 1e-9
PSI_TOL = 1e-10
DERIV_STEP = 1e-5
CROSSING_STEP = 1e-4
ALPHA_TOL = 1e-12


class Verdict(enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    MARGINAL = "marginal"


@dataclasses.dataclass(frozen=True)
class StabilityVerdict:
    verdict: Verdict
    eigenvalues: np.ndarray
    witness: Optional[complex] = None
    details: dict = dataclasses.field(default_factory=dict)

    @property
    def stable(self):
        return self.verdict is Verdict.STABLE


class ThresholdPair(NamedTuple):
    R0: float
    R1: float


class QuarticCoefficients(NamedTuple):
    y1: float
    y2: float
    y3: float
    y4: float

    def monic(self):
        return np.array([1.0, *self])

    def psi(self):
        y1, y2, y3, y4 = self
        return y1 * y2 * y3 - y3 ** 2 - y4 * y1 ** 2

    def psi_scale(self):
        y1, y2, y3, y4 = self
        return max(abs(y1 * y2 * y3), y3 ** 2, abs(y4 * y1 ** 2))


@dataclasses.dataclass(frozen=True)
class CubicStabilityReport:
    C1: float
    C2: float
    C3: float
    F11: float
    F22: float
    F33: float
    conditions_met: dict
    verdict: Verdict
    eigenvalues: np.ndarray
    verbatim: tuple = ()

    @property
    def stable(self):
        return self.verdict is Verdict.STABLE


@dataclasses.dataclass(frozen=True)
class HopfScanResult:
    alpha_star: float
    psi_at_star: float
    imag_part_omega0: float
    transversality_value: float
    eigen_crossing_verified: bool
    real_part_at_star: float = float("nan")
    omega0_sq_from_y: float = float("nan")
    predicted_slope_sign: float = float("nan")
    observed_slope: float = float("nan")
    psi_scale: float = float("nan")
    ABCD: tuple = ()
    equilibrium: Optional[np.ndarray] = None


class HopfScanList(list):
    """Hopf points in alpha order; ``skipped`` lists grid alphas without E*."""

    def __init__(self, items=(), skipped=(), grid=()):
        super().__init__(items)
        self.skipped = list(skipped)
        self.grid = list(grid)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def eigenvalues(M) -> np.ndarray:
    """Eigenvalues sorted by decreasing real part, then imaginary part."""
    w = np.linalg.eigvals(np.asarray(M, dtype=float))
    order = np.lexsort((-w.imag, -w.real))
    return w[order]


def _eigen_verdict(w, scale):
    top = float(np.max(w.real))
    if abs(top) <= GUARD_BAND * max(scale, 1e-300):
        return Verdict.MARGINAL
    return Verdict.STABLE if top < 0 else Verdict.UNSTABLE


def _check(closed, eig, what):
    if Verdict.MARGINAL in (closed, eig):
        return Verdict.MARGINAL
    if closed is not eig:
        raise ConsistencyError(f"{what}: closed-form verdict {closed.value} but eigenvalues say {eig.value}")
    return closed


def _entries(p: ModelParams, s):
    J = jacobian(p, s)
    return J, dict(F11=J[0, 0], F22=J[1, 1], F33=J[2, 2], j12=J[0, 1], j13=J[0, 2],
                   j21=J[1, 0], j24=J[1, 3], j31=J[2, 0], j32=J[2, 1], j34=J[2, 3])


# ---------------------------------------------------------------------------
# E0 and E1
# ---------------------------------------------------------------------------

def thresholds(p: ModelParams) -> ThresholdPair:
    """Threshold quantities whose joint sub-unity makes E1 stable."""
    eo = p.eta + p.omega
    R0 = p.m1 * p.alpha * p.K * p.eta * eo / (
        p.lam * p.omega * eo + p.eta * p.gamma * p.omega + p.d * p.eta * eo)
    R1 = p.m2 * p.phi * p.alpha * p.K * eo / (
        (p.a + p.K) * (p.d + p.delta) * eo + (p.a + p.K) * p.gamma * p.omega)
    return ThresholdPair(R0, R1)


def e0_eigenvalues_closed_form(p: ModelParams):
    """The four E0 eigenvalues in closed form."""
    g = p.gamma * p.omega / (p.eta + p.omega)
    return np.array([p.r, -p.eta, -(p.lam * p.omega / p.eta + p.d + g), -(p.d + p.delta + g)])


def classify_E0(p: ModelParams) -> StabilityVerdict:
    """E0 is a saddle: the crop grows from zero at rate r."""
    w = eigenvalues(jacobian(p, axial_equilibrium(p).state))
    eig = _eigen_verdict(w, np.max(np.abs(w)))
    closed = Verdict.UNSTABLE if p.r > 0 else Verdict.MARGINAL
    return StabilityVerdict(_check(closed, eig, "E0"), w, witness=p.r)


def classify_E1(p: ModelParams) -> StabilityVerdict:
    """Stable iff R0 < 1 and R1 < 1 (Marginal within the guard band of 1)."""
    R = thresholds(p)
    w = eigenvalues(jacobian(p, pest_free_equilibrium(p).state))
    if any(abs(x - 1.0) < GUARD_BAND for x in R):
        closed = Verdict.MARGINAL
    elif R.R0 < 1.0 and R.R1 < 1.0:
        closed = Verdict.STABLE
    else:
        closed = Verdict.UNSTABLE
    eig = _eigen_verdict(w, np.max(np.abs(w)))
    verdict = _check(closed, eig, "E1")
    witness = w[0] if verdict is not Verdict.STABLE else None
    return StabilityVerdict(verdict, w, witness, {"R0": R.R0, "R1": R.R1})


# ---------------------------------------------------------------------------
# E3: cubic factor
# ---------------------------------------------------------------------------

def cubic_stability_coefficients(p: ModelParams, s, form="corrected"):
    """``(C1, C2, C3)`` of the cubic left after factoring out ``rho - F22``.

    ``form="verbatim"`` evaluates the published expressions literally,
    including the ``X^3 + a`` denominators.
    """
    X, S, I, A = (float(v) for v in s)
    _, e = _entries(p, s)
    F11, F33, eta = e["F11"], e["F33"], p.eta
    sig, gam = p.sigma, p.gamma
    cross = p.m2 * p.phi ** 2 * p.alpha ** 2 * p.a * X * I / (p.a + X) ** 3
    aw = gam * sig * I / (1 + A) ** 2
    if form == "corrected":
        C1 = -F11 - F33 + eta
        C2 = F11 * F33 - eta * (F11 + F33) + cross + aw
        C3 = eta * F11 * F33 - aw * F11 + eta * cross
    elif form == "verbatim":
        den = (X ** 3 + p.a) * (1 + A) ** 2
        C1 = -F11 - F33 + eta
        C2 = ((F11 - eta) * F33 - F11 * eta
              + (gam * sig * (X ** 3 + 3 * X ** 2 * p.a + 3 * p.a)
                 + p.m2 * p.phi ** 2 * p.alpha ** 2 * (1 + A) ** 2) * I / den)
        C3 = eta * F11 * F33 + (
            I * X * p.a * p.alpha ** 2 * eta * p.phi ** 2 * p.m2 * (1 + A) ** 2
            - sig * I * gam * (p.a + X) ** 3 * F11) / den
    else:
        raise ValueError(f"unknown form {form!r}")
    return C1, C2, C3


def classify_E3(p: ModelParams, eq: Equilibrium) -> CubicStabilityReport:
    """Routh-Hurwitz on the E3 cubic, cross-checked against eigenvalues."""
    if eq.kind is not EquilibriumKind.HEALTHY_PEST_FREE:
        raise ValueError("classify_E3 needs a healthy pest-free equilibrium")
    J, e = _entries(p, eq.state)
    C1, C2, C3 = cubic_stability_coefficients(p, eq.state)
    hurwitz = C1 * C2 - C3
    scale = max(abs(C1 * C2), abs(C3), 1e-300)
    cond = {"F22<0": e["F22"] < 0, "C1>0": C1 > 0, "C3>0": C3 > 0, "C1C2-C3>0": hurwitz > 0}
    near = (abs(e["F22"]) <= GUARD_BAND * np.max(np.abs(J))
            or abs(C3) <= GUARD_BAND * max(abs(eq.state.I), 1e-300) * np.max(np.abs(J)) ** 3
            or abs(hurwitz) <= GUARD_BAND * scale)
    closed = Verdict.MARGINAL if near else (Verdict.STABLE if all(cond.values()) else Verdict.UNSTABLE)
    w = eigenvalues(J)
    verdict = _check(closed, _eigen_verdict(w, np.max(np.abs(J))), "E3")
    return CubicStabilityReport(C1, C2, C3, e["F11"], e["F22"], e["F33"], cond, verdict, w,
                                cubic_stability_coefficients(p, eq.state, "verbatim"))


# ---------------------------------------------------------------------------
# E*: quartic
# ---------------------------------------------------------------------------

def _quartic_corrected(p, e):
    F11, F22, F33 = e["F11"], e["F22"], e["F33"]
    j12, j13, j21, j24 = e["j12"], e["j13"], e["j21"], e["j24"]
    j31, j32, j34 = e["j31"], e["j32"], e["j34"]
    sg, et = p.sigma, p.eta
    y1 = -(F11 + F22 + F33) + et
    y2 = (F11 * F22 - j12 * j21 + F11 * F33 - j13 * j31 - et * F11
          + F22 * F33 - et * F22 - sg * j24 - et * F33 - sg * j34)
    M234 = F22 * (-et * F33 - sg * j34) + j24 * (sg * j32 - sg * F33)
    M123 = F11 * F22 * F33 - j12 * j21 * F33 + j13 * (j21 * j32 - F22 * j31)
    M124 = -et * F11 * F22 - sg * F11 * j24 + et * j12 * j21
    M134 = -et * F11 * F33 - sg * F11 * j34 + et * j13 * j31
    y3 = -(M123 + M124 + M134 + M234)
    y4 = (F11 * M234
          - j12 * (j21 * (-et * F33 - sg * j34) + j24 * j31 * sg)
          + j13 * (j21 * (-et * j32 - sg * j34) + F22 * et * j31 + j24 * sg * j31))
    return y1, y2, y3, y4


def _quartic_verbatim(p, s, e):
    X, S, I, A = (float(v) for v in s)
    F11, F22, F33 = e["F11"], e["F22"], e["F33"]
    al, ph, a, lam, gam, sg, et = p.alpha, p.phi, p.a, p.lam, p.gamma, p.sigma, p.eta
    m1, m2 = p.m1, p.m2
    A2 = (1 + A) ** 2
    cross = m2 * ph ** 2 * al ** 2 * a * I * X / (X + a) ** 3
    lamS = lam * S + gam * S / A2
    y1 = -(F11 + F22 + F33) + et
    y2 = ((F22 + F33 - et) * F11 + (F33 - et) * F22 - et * F33 + S * X * al ** 2 * m1
          - gam * (I + S) * sg / (A2 * (X + a)) - cross)
    y3 = (((-F33 + et) * F22 + et * F33 + gam * (I + S) * sg / A2) * F11
          + (et * F33 + (-lam * S + gam * I / A2) * sg + cross) * F22
          + (-S * X * al ** 2 * m1 + sg * lamS) * F33
          + S * al ** 2 * (et + A * lam * ph / (X + a)) * X * m1
          - A * lamS * sg * lam
          - cross * et)
    y4 = (((lam * S - gam * I / A2) * sg - et * F33) * F22
          - sg * lamS * F33
          + A * lamS * sg * lam * F11
          + al ** 2 * ph ** 2 * et * X * F22 * m2 * a * I / (X + a) ** 3
          - S * X * al ** 2 * et * m1 * F33
          - (X + a - ph) * m2 * I * sg * a * al ** 2 * (lam * A2 + gam) * ph * X * S / (A2 * (X + a) ** 3)
          + ((S * (X + a - ph) * sg + A * et * ph) * A2 * lam - I * gam * sg * (X + a - ph))
          * S * X * al ** 2 * m1 / (A2 * (X + a)))
    return y1, y2, y3, y4


def quartic_coefficients(p: ModelParams, eq, form="corrected") -> QuarticCoefficients:
    """``y1..y4`` of the E* characteristic polynomial.

    Args:
        eq: an :class:`Equilibrium` or a raw state vector.
        form: ``"corrected"`` (principal minors of the Jacobian written out
            entry by entry) or ``"verbatim"`` (published display).
    """
    s = eq.state if isinstance(eq, Equilibrium) else eq
    _, e = _entries(p, s)
    if form == "corrected":
        y = _quartic_corrected(p, e)
    elif form == "verbatim":
        y = _quartic_verbatim(p, s, e)
    else:
        raise ValueError(f"unknown form {form!r}")
    y = QuarticCoefficients(*map(float, y))
    if not np.all(np.isfinite(y)):
        raise NumericDomainError("non-finite quartic coefficient")
    return y


def coefficient_deviations(p: ModelParams, eq: Equilibrium):
    """Relative deviation of each published coefficient from the corrected one."""
    if eq.kind is EquilibriumKind.HEALTHY_PEST_FREE:
        names = ("C1", "C2", "C3")
        good = cubic_stability_coefficients(p, eq.state, "corrected")
        bad = cubic_stability_coefficients(p, eq.state, "verbatim")
    elif eq.kind is EquilibriumKind.COEXISTENCE:
        names = ("y1", "y2", "y3", "y4")
        good = quartic_coefficients(p, eq, "corrected")
        bad = quartic_coefficients(p, eq, "verbatim")
    else:
        raise ValueError("deviations are defined for E3 and E* only")
    return {n: {"corrected": g, "verbatim": b, "rel_dev": abs(b - g) / max(abs(g), 1e-300)}
            for n, g, b in zip(names, good, bad)}


def classify_Estar(p: ModelParams, eq: Equilibrium) -> StabilityVerdict:
    """Routh-Hurwitz on the E* quartic, cross-checked against eigenvalues."""
    if eq.kind is not EquilibriumKind.COEXISTENCE:
        raise ValueError("classify_Estar needs a coexistence equilibrium")
    y = quartic_coefficients(p, eq)
    y1, y2, y3, y4 = y
    quantities = {
        "y1>0": (y1, max(abs(y1), 1e-300)),
        "y4>0": (y4, max(abs(y4), abs(y1) ** 4 * 1e-12, 1e-300)),
        "y1y2-y3>0": (y1 * y2 - y3, max(abs(y1 * y2), abs(y3), 1e-300)),
        "psi>0": (y.psi(), max(y.psi_scale(), 1e-300)),
    }
    cond = {k: v > 0 for k, (v, _) in quantities.items()}
    near = any(abs(v) <= GUARD_BAND * sc for v, sc in quantities.values())
    closed = Verdict.MARGINAL if near else (Verdict.STABLE if all(cond.values()) else Verdict.UNSTABLE)
    J = jacobian(p, eq.state)
    w = eigenvalues(J)
    verdict = _check(closed, _eigen_verdict(w, np.max(np.abs(J))), "E*")
    return StabilityVerdict(verdict, w, w[0], {"y": tuple(y), "conditions": cond, "psi": y.psi()})


def classify(p: ModelParams, eq: Equilibrium):
    """Dispatch to the classifier matching ``eq.kind``."""
    if eq.kind is EquilibriumKind.AXIAL:
        return classify_E0(p)
    if eq.kind is EquilibriumKind.PEST_FREE:
        return classify_E1(p)
    if eq.kind is EquilibriumKind.HEALTHY_PEST_FREE:
        return classify_E3(p, eq)
    return classify_Estar(p, eq)


# ---------------------------------------------------------------------------
# Hopf scan in alpha
# ---------------------------------------------------------------------------

def coexistence_at(p: ModelParams, alpha, seed=None):
    """E* state at attack rate ``alpha``, continued from ``seed`` when given.

    Without a seed (or if continuation fails) the full seed grid is used
    and the point closest to ``seed`` (or the lowest-awareness one) kept.
    Returns ``None`` when no interior equilibrium is found.
    """
    q = p.replace(alpha=float(alpha))
    if seed is not None:
        s = _accept_coexistence(q, _newton(q.as_array(), np.array(seed, dtype=float)))
        if s is not None:
            return s
    found = coexistence_equilibria(q, cross_check=False)
    if not found:
        return None
    if seed is None:
        return found[0].array
    dist = [np.max(np.abs(e.array - seed)) for e in found]
    return found[int(np.argmin(dist))].array


def track_coexistence(p: ModelParams, alphas):
    """Continuation of one E* branch along ``alphas`` (None where absent)."""
    out = []
    seed = None
    for al in alphas:
        s = coexistence_at(p, al, seed)
        out.append(s)
        if s is not None:
            seed = s
    return out


def psi(p: ModelParams, alpha, seed=None):
    """Third Hurwitz determinant ``y1 y2 y3 - y3^2 - y4 y1^2`` at E*(alpha)."""
    s = coexistence_at(p, alpha, seed)
    if s is None:
        raise NoCoexistence(f"no coexistence equilibrium at alpha={alpha!r}")
    return quartic_coefficients(p.replace(alpha=float(alpha)), s).psi()


def _psi_state(p, alpha, seed):
    s = coexistence_at(p, alpha, seed)
    if s is None:
        return None, None
    return s, quartic_coefficients(p.replace(alpha=float(alpha)), s)


def _pair(w):
    """Eigenvalue with positive imaginary part closest to the imaginary axis."""
    cands = [z for z in w if z.imag > 0]
    if not cands:
        return None
    return min(cands, key=lambda z: abs(z.real))


def _y_derivatives(p, alpha, s):
    h = DERIV_STEP * alpha
    sp_, yp = _psi_state(p, alpha + h, s)
    sm_, ym = _psi_state(p, alpha - h, s)
    if yp is None or ym is None:
        raise NoCoexistence("E* lost inside the differentiation stencil")
    return (np.array(yp) - np.array(ym)) / (2 * h)


def transversality(y, dy, beta1, beta2):
    """A, B, C, D of the Hopf transversality test at ``rho = beta1 + i beta2``."""
    y1, y2, y3, _ = y
    d1, d2, d3, d4 = dy
    b1, b2 = beta1, beta2
    A = 4 * b1 ** 3 - 12 * b1 * b2 ** 2 + 3 * y1 * (b1 ** 2 - b2 ** 2) + 2 * y2 * b1 + y3
    B = 12 * b1 ** 2 * b2 + 6 * y1 * b1 * b2 - 4 * b2 ** 3 + 2 * y2 * b2
    C = (b1 ** 3 - 3 * b1 * b2 ** 2) * d1 + (b1 ** 2 - b2 ** 2) * d2 + b1 * d3 + d4
    D = (3 * b1 ** 2 * b2 - b2 ** 3) * d1 + 2 * b1 * b2 * d2 + b2 * d3
    return A, B, C, D


def refine_hopf(p: ModelParams, lo, hi, s_lo, psi_lo, max_iter=200):
    """Bisect a sign change of psi on ``[lo, hi]`` and analyse the crossing.

    Stops once psi is within ``PSI_TOL`` of its scale and the bracket is
    narrower than ``ALPHA_TOL`` relative, so the result does not depend on
    the grid that produced the bracket.
    """
    s_mid, y_mid, mid = s_lo, None, lo
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        s_mid, y_mid = _psi_state(p, mid, s_lo)
        if y_mid is None:
            raise NoCoexistence(f"E* lost while refining near alpha={mid!r}")
        val = y_mid.psi()
        if hi - lo <= 4e-16 * mid:
            break
        if abs(val) <= PSI_TOL * y_mid.psi_scale() and hi - lo <= ALPHA_TOL * mid:
            break
        if np.sign(val) == np.sign(psi_lo):
            lo, s_lo, psi_lo = mid, s_mid, val
        else:
            hi = mid
    alpha = mid
    q = p.replace(alpha=alpha)
    w = eigenvalues(jacobian(q, s_mid))
    rho = _pair(w)
    beta1, beta2 = (rho.real, rho.imag) if rho is not None else (np.nan, np.nan)
    dy = _y_derivatives(p, alpha, s_mid)
    A, B, C, D = transversality(y_mid, dy, beta1, beta2)
    predicted = -(A * C + B * D) / (A ** 2 + B ** 2)
    # eigenvalue crossing by finite differences
    h = CROSSING_STEP * alpha
    re = []
    for a_ in (alpha - h, alpha + h):
        s_ = coexistence_at(p, a_, s_mid)
        z = _pair(eigenvalues(jacobian(p.replace(alpha=a_), s_))) if s_ is not None else None
        re.append(np.nan if z is None else z.real)
    slope = (re[1] - re[0]) / (2 * h)
    crossed = bool(np.isfinite(slope) and np.sign(re[0]) != np.sign(re[1]))
    return HopfScanResult(
        alpha_star=alpha, psi_at_star=y_mid.psi(), imag_part_omega0=float(beta2),
        transversality_value=A * C + B * D, eigen_crossing_verified=crossed,
        real_part_at_star=float(beta1), omega0_sq_from_y=y_mid.y3 / y_mid.y1,
        predicted_slope_sign=float(np.sign(predicted)), observed_slope=float(slope),
        psi_scale=y_mid.psi_scale(), ABCD=(A, B, C, D), equilibrium=s_mid)


def psi_grid(p: ModelParams, alphas):
    """Continuation-tracked E* and psi on a grid; entries are None without E*."""
    states = track_coexistence(p, alphas)
    vals = []
    for al, s in zip(alphas, states):
        vals.append(None if s is None else quartic_coefficients(p.replace(alpha=float(al)), s).psi())
    return states, vals


def hopf_scan(p: ModelParams, alpha_range, n_grid) -> HopfScanList:
    """Locate sign changes of psi on a uniform alpha grid and refine them.

    Pairs of neighbouring grid points where E* is missing are skipped and
    reported in ``result.skipped``.
    """
    lo, hi = map(float, alpha_range)
    if not (0 < lo < hi) or n_grid < 2:
        raise ValueError("need 0 < lo < hi and n_grid >= 2")
    alphas = np.linspace(lo, hi, int(n_grid))
    states, vals = psi_grid(p, alphas)
    found = []
    for i in range(len(alphas) - 1):
        if vals[i] is None or vals[i + 1] is None:
            continue
        if vals[i] == 0.0 or np.sign(vals[i]) != np.sign(vals[i + 1]):
            found.append(refine_hopf(p, alphas[i], alphas[i + 1], states[i], vals[i]))
    skipped = [float(a) for a, v in zip(alphas, vals) if v is None]
    return HopfScanList(found, skipped, list(zip(alphas.tolist(), vals)))
