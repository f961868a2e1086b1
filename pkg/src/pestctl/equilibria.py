"""Fixed points of the uncontrolled model.

E0 and E1 are closed forms. The boundary point E2 needs a positive root
of a quadratic with positive coefficients, so it is only checked for.
Healthy pest-free points E3 come from a cubic in X, and coexistence
points E* from a damped Newton solve of the full steady-state system.

Two versions of the sextic in A that coexistence points must satisfy are
available. :func:`sextic_coefficients` evaluates the published display
term by term. :func:`elimination_sextic` rebuilds the polynomial by
eliminating X, S and I with polynomial arithmetic. The two disagree for
most parameter sets (see the project notes), and the elimination form is
the one used to cross-check Newton.
"""

import dataclasses
import enum
from typing import NamedTuple

import numpy as np
from numpy.polynomial import polynomial as P

from . import _kernels
from .errors import DegenerateDenominator, NumericDomainError
from .model import ModelParams, State

REAL_ROOT_TOL = 1e-9
RESIDUAL_TOL = 1e-9
NEWTON_MAX_ITER = 100
NEWTON_STEP_TOL = 1e-12
DEDUPE_TOL = 1e-8
SINGULAR_GUARD = 1e-10
CLOSED_FORM_TOL = 1e-8
SEXTIC_TOL = 1e-6


class EquilibriumKind(enum.Enum):
    AXIAL = "E0"
    PEST_FREE = "E1"
    HEALTHY_PEST_FREE = "E3"
    COEXISTENCE = "E*"


@dataclasses.dataclass(frozen=True)
class Equilibrium:
    kind: EquilibriumKind
    state: State
    residual_norm: float
    existence_flags: dict = dataclasses.field(default_factory=dict)

    @property
    def array(self):
        return np.array(self.state, dtype=float)


class NonExistenceReport(NamedTuple):
    coefficients: tuple
    roots: tuple
    has_positive_root: bool


class CubicCoefficients(NamedTuple):
    a1: float
    a2: float
    a3: float

    def monic(self):
        """Coefficients highest degree first, leading 1 included."""
        return np.array([1.0, self.a1, self.a2, self.a3])


class SexticCoefficients(NamedTuple):
    a1: float
    a2: float
    a3: float
    a4: float
    a5: float
    a6: float

    def monic(self):
        return np.array([1.0, *self])

    def __call__(self, A):
        return np.polyval(self.monic(), A)

    def scaled_residual(self, A):
        """``|f(A)|`` divided by the largest coefficient magnitude."""
        c = self.monic()
        return abs(np.polyval(c, A)) / np.max(np.abs(c))


def _residual(pa, s):
    with np.errstate(all="ignore"):
        f = np.array(_kernels.field_numpy(pa, *s, 1.0, 1.0, 1.0))
    return float(np.max(np.abs(f)))


def make_equilibrium(kind, p, s, **flags):
    """Wrap a state as an :class:`Equilibrium`, recording its residual."""
    s = np.asarray(s, dtype=float)
    return Equilibrium(kind, State(*map(float, s)), _residual(p.as_array(), s), flags)


def axial_equilibrium(p: ModelParams) -> Equilibrium:
    """E0 = (0, 0, 0, omega/eta): no crop, no pests."""
    return make_equilibrium(EquilibriumKind.AXIAL, p, (0.0, 0.0, 0.0, p.omega / p.eta))


def pest_free_equilibrium(p: ModelParams) -> Equilibrium:
    """E1 = (K, 0, 0, omega/eta): crop at carrying capacity, no pests."""
    return make_equilibrium(EquilibriumKind.PEST_FREE, p, (p.K, 0.0, 0.0, p.omega / p.eta))


def boundary_equilibrium_check(p: ModelParams) -> NonExistenceReport:
    """Look for the positive root of ``lam A^2 + (gamma + d + lam) A + d``.

    The crop-free boundary point E2 requires one; with positive parameters
    there is no sign change, so the report should always come back empty.
    """
    coeffs = (p.lam, p.gamma + p.d + p.lam, p.d)
    roots = np.roots(coeffs)
    positive = any(abs(z.imag) < REAL_ROOT_TOL * (1 + abs(z.real)) and z.real > 0 for z in roots)
    return NonExistenceReport(coeffs, tuple(complex(z) for z in roots), bool(positive))


# ---------------------------------------------------------------------------
# E3: susceptible pests extinct
# ---------------------------------------------------------------------------

def cubic_coefficients(p: ModelParams) -> CubicCoefficients:
    """Coefficients of the monic cubic whose roots give the crop level at E3."""
    r, K, al, ph, a = p.r, p.K, p.alpha, p.phi, p.a
    m2, d, de, g = p.m2, p.d, p.delta, p.gamma
    sg, et, om = p.sigma, p.eta, p.omega
    den = -al * ph * m2 + d + de + g
    if abs(den) <= 1e-15 * (al * ph * m2 + d + de + g):
        raise DegenerateDenominator("alpha*phi*m2 equals d + delta + gamma")
    a1 = ((al * ph * m2 - d - de - g) * K - a * (al * ph * m2 - 2 * d - 2 * de - 2 * g)) / den
    a2 = (((al * ph * m2 - 2 * d - 2 * de - 2 * g) * K + a * (d + de + g)) * a / den
          - K * ((-al * ph * m2 + d + de + g) * om + et * (-al * ph * m2 + d + de)) * ph * al
          / (r * sg * den))
    a3 = -(K * a ** 2 * r * (d + de + g) * sg
           + K * ph * a * al * ((d + de + g) * om + et * (d + de))) / (r * sg * den)
    return CubicCoefficients(a1, a2, a3)


def e3_state(p: ModelParams, X):
    """Complete a crop level X to the E3 candidate ``(X, 0, I, A)``."""
    I = p.r * (p.a + X) * (p.K - X) / (p.phi * p.alpha * p.K)
    A = (p.omega + p.sigma * I) / p.eta
    return np.array([X, 0.0, I, A])


def e3_reduced_residual(p: ModelParams, X):
    """Infected-pest balance at the E3 candidate, divided by I."""
    _, _, I, A = e3_state(p, X)
    return (p.m2 * p.phi * p.alpha * X / (p.a + X) - (p.d + p.delta + p.gamma * A / (1 + A)))


def real_roots(coeffs):
    """Real roots of a polynomial (highest degree first), via companion eigenvalues."""
    c = np.trim_zeros(np.asarray(coeffs, dtype=float), "f")
    if len(c) < 2:
        return np.array([])
    comp = np.diag(np.ones(len(c) - 2), -1)
    comp[0, :] = -c[1:] / c[0]
    z = np.linalg.eigvals(comp)
    keep = np.abs(z.imag) < REAL_ROOT_TOL * (1.0 + np.abs(z.real))
    return np.sort(z.real[keep])


def _polish_root(c, x, steps=3):
    dc = np.polyder(c)
    for _ in range(steps):
        dv = np.polyval(dc, x)
        if dv == 0.0:
            break
        x = x - np.polyval(c, x) / dv
    return x


def healthy_pest_free_equilibria(p: ModelParams):
    """All admissible E3 points (possibly none), sorted by crop level."""
    c = cubic_coefficients(p).monic()
    out = []
    for x in real_roots(c):
        x = _polish_root(c, x)
        if not 0.0 < x < p.K:
            continue
        s = e3_state(p, x)
        if not (s[2] > 0.0 and s[3] > 0.0):
            continue
        eq = make_equilibrium(EquilibriumKind.HEALTHY_PEST_FREE, p, s, cubic_root=True)
        if eq.residual_norm <= RESIDUAL_TOL * (1.0 + np.max(np.abs(s))):
            out.append(eq)
    return out


# ---------------------------------------------------------------------------
# E*: coexistence
# ---------------------------------------------------------------------------

def coexistence_closed_forms(p: ModelParams, A, X=None):
    """Closed-form ``(X, S, I)`` at awareness A.

    X defaults to its own closed form in A; passing a value evaluates the
    S and I expressions there instead. Returns NaNs on the singular surface
    ``X + a - phi = 0``.
    """
    if X is None:
        X = (p.lam * A ** 2 + (p.d + p.lam + p.gamma) * A + p.d) / (p.m1 * p.alpha * (1 + A))
    den = p.K * p.sigma * p.alpha * (X + p.a - p.phi)
    if abs(X + p.a - p.phi) <= SINGULAR_GUARD:
        return X, np.nan, np.nan
    S = (p.r * (p.a + X) * (p.K - X) * p.sigma - p.K * p.phi * p.alpha * (A * p.eta - p.omega)) / den
    I = (p.a + X) * (((A * p.eta - p.omega) * p.alpha - p.sigma * p.r) * p.K + p.sigma * p.r * X) / den
    return X, S, I


def _newton(pa, s, max_iter=NEWTON_MAX_ITER):
    """Damped Newton on the steady-state system; returns the point or None."""
    u1 = np.ones((1, 3))
    with np.errstate(all="ignore"):
        f = np.array(_kernels.field_numpy(pa, *s, 1.0, 1.0, 1.0))
        fn = np.max(np.abs(f))
        for _ in range(max_iter):
            if not np.isfinite(fn):
                return None
            J = _kernels.jacobian_numpy(pa, s[None, :], u1)[0]
            try:
                step = np.linalg.solve(J, -f)
            except np.linalg.LinAlgError:
                return None
            t = 1.0
            for _ in range(40):
                trial = s + t * step
                ft = np.array(_kernels.field_numpy(pa, *trial, 1.0, 1.0, 1.0))
                ftn = np.max(np.abs(ft))
                if ftn < fn or fn == 0.0:
                    break
                t *= 0.5
            else:
                # no decrease possible: either converged to roundoff or stuck
                return s if np.max(np.abs(step)) < NEWTON_STEP_TOL * (1 + np.max(np.abs(s))) else None
            s, f, fn = trial, ft, ftn
            if np.max(np.abs(t * step)) < NEWTON_STEP_TOL * (1.0 + np.max(np.abs(s))):
                return s
    return None


def newton_seeds(p: ModelParams):
    """Deterministic seed grid: X over tenths of K, A over multiples of omega/eta."""
    a0 = p.omega / p.eta
    seeds = []
    for X in p.K * np.arange(1, 10) / 10.0:
        for A in a0 * np.arange(1, 11) / 2.0:
            _, S, I = coexistence_closed_forms(p, A, X)
            if not (np.isfinite(S) and np.isfinite(I)):
                S = I = 0.5 * max(p.eta * A - p.omega, p.omega) / p.sigma
            seeds.append(np.array([X, abs(S), abs(I), A]))
    return seeds


def _accept_coexistence(p, s):
    if s is None or not np.all(s > 1e-12 * (1.0 + np.max(np.abs(s)))):
        return None
    if abs(s[0] + p.a - p.phi) <= SINGULAR_GUARD:
        return None
    res = _residual(p.as_array(), s)
    if res > RESIDUAL_TOL * (1.0 + np.max(np.abs(s))):
        return None
    return s


def _coexistence_flags(p, s, sextic=None, verbatim=None):
    X, S, I = coexistence_closed_forms(p, s[3])
    _, S2, I2 = coexistence_closed_forms(p, s[3], s[0])
    flags = {
        "closed_form_X": bool(abs(X - s[0]) <= CLOSED_FORM_TOL),
        "closed_form_SI": bool(abs(S2 - s[1]) <= CLOSED_FORM_TOL and abs(I2 - s[2]) <= CLOSED_FORM_TOL),
        "A_exceeds_bound": bool(s[3] > (p.alpha * p.omega + p.r * p.sigma) / (p.alpha * p.eta)),
    }
    if sextic is not None:
        flags["sextic_residual"] = float(sextic.scaled_residual(s[3]))
        flags["sextic_root"] = flags["sextic_residual"] <= SEXTIC_TOL
    if verbatim is not None:
        flags["sextic_verbatim_residual"] = float(verbatim.scaled_residual(s[3]))
        flags["sextic_verbatim_root"] = flags["sextic_verbatim_residual"] <= SEXTIC_TOL
    return flags


def _dedupe(points):
    points = sorted(points, key=lambda s: tuple(np.round(s, 12)[[3, 0, 1, 2]]))
    out = []
    for s in points:
        if all(np.max(np.abs(s - q)) > DEDUPE_TOL for q in out):
            out.append(s)
    return out


def coexistence_equilibria(p: ModelParams, seeds=None, cross_check=True):
    """Interior equilibria found by damped Newton from a grid of seeds.

    Args:
        seeds: optional iterable of starting states; defaults to
            :func:`newton_seeds`. Continuation passes the previous solution.
        cross_check: attach sextic residuals (elimination and verbatim
            forms) to each result's ``existence_flags``.

    Returns:
        List of :class:`Equilibrium`, sorted by awareness level.
    """
    pa = p.as_array()
    seeds = newton_seeds(p) if seeds is None else seeds
    found = []
    for s0 in seeds:
        s = _accept_coexistence(p, _newton(pa, np.array(s0, dtype=float)))
        if s is not None:
            found.append(s)
    found = _dedupe(found)
    sextic = verbatim = None
    if cross_check and found:
        sextic = elimination_sextic(p)
        try:
            verbatim = sextic_coefficients(p)
        except NumericDomainError:
            verbatim = None
    return [make_equilibrium(EquilibriumKind.COEXISTENCE, p, s, **_coexistence_flags(p, s, sextic, verbatim))
            for s in found]


def all_equilibria(p: ModelParams):
    """Every equilibrium the package can locate, in the order E0, E1, E3..., E*..."""
    out = [axial_equilibrium(p), pest_free_equilibrium(p)]
    try:
        out += healthy_pest_free_equilibria(p)
    except DegenerateDenominator:
        pass
    out += coexistence_equilibria(p)
    return out


# ---------------------------------------------------------------------------
# sextic in A
# ---------------------------------------------------------------------------

def sextic_coefficients(p: ModelParams) -> SexticCoefficients:
    """Published sextic coefficients, transcribed term by term.

    Kept for cross-validation only: several coefficients do not match the
    polynomial obtained by elimination (see :func:`elimination_sextic`).
    """
    r, K, al, ph, a, m1, m2 = p.r, p.K, p.alpha, p.phi, p.a, p.m1, p.m2
    lam, d, de, g, sg, et, om = p.lam, p.d, p.delta, p.gamma, p.sigma, p.eta, p.omega
    a1 = ((3 * lam ** 2 * r * sg - r * sg * (((K - a) * m1 + m2 * ph) * al - 3 * d - de - 3 * g) * lam)
          / (lam ** 2 * r * sg)
          + m1 * et * (ph * (m1 - m2) * al + d + de + g) * al ** 2 / (lam ** 2 * r * sg))
    a2 = ((3 * sg * lam ** 3 * r - 3 * sg * r * (((K - a) * m1 + m2 * ph) * al - 3 * d - de - 2 * g) * lam ** 2)
          / (sg * lam ** 3 * r)
          - m1 * K * (ph * (m1 - m2) * (om - 3 * et) * al + om * (d + de + g)
                      + (-3 * d - 3 * de - 2 * g) * et + sg * r * (m1 * a - m2 * ph)) * al ** 2
          / (lam ** 2 * r * sg)
          + ((-2 * (K - a) * (d + de / 2 + g) * m1 - 2 * m2 * ph * (d + g)) * al
             + 3 * (d + g) * (d + 2 / 3 * de + g)) / lam ** 2
          + K * et * ((a * (d + de + g) * m1 - m2 * ph * (d + g)) * al + (d + g) * (d + de + g))
          * m1 * al ** 2 / (sg * lam ** 3 * r))
    a3 = (-3 * m1 ** 2 * K * al ** 3 * (ph * (om - et) * lam
                                        + 1 / 3 * a * (om * (d + de + g) - 3 * et * (d + de + 2 / 3 * g)))
          / (sg * lam ** 3 * r)
          + 3 * m1 * K * al ** 3 * ph * ((lam + d / 3 + g / 3) * om - (lam + d + 2 / 3 * g) * et) * m2
          / (sg * lam ** 3 * r)
          + 3 * m1 * K * (sg * a * r * (lam + d / 3 + de / 3 + g / 3) * m1
                          - (lam + d / 3 + g / 3) * ph * m2 * r * sg + (om / 3 - et / 3) * g ** 2) * al ** 2
          / ((sg * lam) ** 3 * r)
          - 3 * m1 * K * (((2 / 3 * om - 4 / 3 * et) * d + (2 / 3 * om - et / 3) * lam
                           + 1 / 3 * de * (om - 2 * et)) * g + (om / 3 - et) * d) * al ** 2
          / ((sg * lam) ** 3 * r)
          + (-(K - a) * (d ** 2 + (de + 2 * g + 6 * lam) * d + g * (de + 3 * g + 4 * lam)) * m1
             - ph * (d ** 2 + 6 * lam * d + 3 * lam ** 2) * m2) / (3 * lam ** 3 * r)
          + (lam ** 3 + (9 * d + 3 * de + 3 * g) * lam ** 2
             + (3 * g ** 2 + (12 * d + 4 * de) * g + 9 * d ** 2 + 6 * d * de) * lam
             + (d + g) ** 2 * (d + de + g)) / lam ** 3)
    a4 = ((((a * (om - et) * d + ph * (om - et / 3) * lam + a * g + de * (om - et)) * m1
            - (om - et / 3 + lam + 2 / 3 * om * g) * ph * m2) * K * al ** 3) / (sg * lam ** 3 * r)
          - 3 * m1 * K * (sg * a * r * (lam + d + de) * m1 - (lam + d + 2 / 3 * g) * ph * m2 * r * sg
                          + de * (om - et) + de * (om - et / 3) * lam) * al ** 2 / (sg * lam ** 3 * r)
          - 3 * (((K - a) * (6 * lam + 3 * de + 4 * g) * d
                  + (lam ** 2 + (3 * de + 2 * g) * lam + 2 * de * g + g ** 2) * m1
                  + ph * (3 * d ** 2 + (6 * lam + 4 * g) * d) * m2) * al) / lam ** 3
          - 9 * sg * (d ** 3 + (3 * lam + de + 2 * g) * d ** 2
                      + (lam ** 2 + (2 * de + 2 * g) * lam + 4 / 3 * de * g + g ** 2) * d
                      + 1 / 3 * de * (lam + g) ** 2) / lam ** 3)
    a5 = (-K * (((lam * ph + 3 * (d + de + g / 3) * a) * om - a * et * (d + de)) * m1
                - m2 * ((lam + 3 * d + g) * om - d * et) * ph) * al ** 3 * m1 / (sg * lam ** 3 * r)
          - m1 * (sg * a * r * (lam + 3 * de + g) * m1 - m2 * r * ph * (lam + 3 * d) * sg
                  + (de * (3 * om - et) + om * (lam + 2 * g)) * d) * K * al ** 2 / (sg * lam ** 3 * r)
          - 2 * (((K - a) * (3 / 2 * d ** 2 + (lam + 3 / 2 * de + g) * d + 1 / 2 * de * (lam + g)) * m1
                  + m2 * ph * d * (lam + 3 / 2 * d + g)) * al) / lam ** 3
          + 3 * (d ** 2 + (lam + de + g) * d + 2 / 3 * de * (lam + g)) * d / lam ** 3)
    common = K * al ** 2 * om * m1 + K * al * r * sg * m1 - d * r * sg
    a6 = (m2 * d * al * common * ph / (sg * lam ** 3 * r)
          - ((a * d * m1 + a * de * m1) * al + d * (d + de)) * common / (sg * lam ** 3 * r))
    out = SexticCoefficients(a1, a2, a3, a4, a5, a6)
    if not np.all(np.isfinite(out)):
        raise NumericDomainError("non-finite sextic coefficient")
    return out


def elimination_sextic(p: ModelParams) -> SexticCoefficients:
    """Monic sextic in A obtained by eliminating X, S and I.

    With ``X = N(A)/D(A)``, the pair (S, I) solves the linear crop and
    awareness balances; substituting into the infected-pest balance and
    clearing denominators leaves a degree-6 polynomial in A.
    """
    N = np.array([p.d, p.d + p.lam + p.gamma, p.lam])
    D = p.m1 * p.alpha * np.array([1.0, 1.0])
    T = np.array([-p.omega, p.eta]) / p.sigma
    Avar = np.array([0.0, 1.0])
    aD_N = P.polyadd(p.a * D, N)
    # I = aD_N * (alpha K T D - r (K D - N)) / (K D alpha ((a - phi) D + N))
    inner = P.polysub(p.alpha * p.K * P.polymul(T, D), p.r * P.polysub(p.K * D, N))
    bracket = P.polysub(
        p.m2 * p.phi * p.alpha * P.polymul(N, D),
        P.polymul(P.polymul(P.polyadd([p.d + p.delta], p.lam * Avar), aD_N), D))
    bracket = P.polysub(bracket, p.gamma * p.m1 * p.alpha * P.polymul(Avar, aD_N))
    tail = P.polymul(P.polymul(p.lam * Avar, T),
                     p.K * p.alpha * P.polymul(P.polymul(D, D), P.polyadd((p.a - p.phi) * D, N)))
    poly = P.polyadd(P.polymul(inner, bracket), tail)
    poly = np.trim_zeros(poly, "b")
    if len(poly) != 7 or poly[-1] == 0.0:
        raise NumericDomainError("elimination polynomial is not of degree 6")
    c = poly[::-1] / poly[-1]
    return SexticCoefficients(*map(float, c[1:]))
