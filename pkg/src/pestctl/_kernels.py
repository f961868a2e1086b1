"""Hot loops: fixed-step RK4 sweeps for the state and adjoint systems.

Two interchangeable implementations are kept side by side.

* ``*_numba`` kernels loop over scalars and are compiled with ``@njit``.
* ``*_numpy`` kernels run in the interpreter. The forward sweep is
  vectorised across a batch of parameter sets, and the adjoint sweep is
  written in matrix form, ``lam' = -J_u(x)^T lam - grad g(x)``, which makes
  it an independent route to the explicit costate formulas used by the
  numba kernel.

The active backend is picked once at import time from ``PESTCTL_BACKEND``
(``numba`` or ``numpy``). Without numba installed the decorators below
become no-ops and the numpy backend is selected.

Parameter vectors follow :data:`PARAM_ORDER`; weight vectors are
``(P1, P2, P3, Q, R)``.
"""

import os
import warnings

import numpy as np

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def _identity(fn):
            return fn

        return _identity


PARAM_ORDER = ("r", "K", "alpha", "phi", "a", "m1", "m2", "lam",
               "d", "delta", "gamma", "sigma", "eta", "omega")

# Sweep status codes.
OK = 0
NONFINITE = 1
NEGATIVE = 2

# Components in [-CLAMP_TOL, 0) are roundoff and get clamped to zero.
CLAMP_TOL = 1e-9


def _select_backend():
    requested = os.environ.get("PESTCTL_BACKEND", "").strip().lower()
    if requested in ("", "auto"):
        return "numba" if NUMBA_AVAILABLE else "numpy"
    if requested not in ("numba", "numpy"):
        raise ValueError(f"PESTCTL_BACKEND must be 'numba' or 'numpy', got {requested!r}")
    if requested == "numba" and not NUMBA_AVAILABLE:
        warnings.warn("numba is not installed; falling back to the numpy backend")
        return "numpy"
    return requested


BACKEND = _select_backend()


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _field(p, X, S, I, A, u1, u2, u3):
    r = p[0]
    K = p[1]
    alpha = p[2]
    phi = p[3]
    a = p[4]
    m1 = p[5]
    m2 = p[6]
    lam = p[7]
    d = p[8]
    delta = p[9]
    gamma = p[10]
    sigma = p[11]
    eta = p[12]
    omega = p[13]
    holling = phi * alpha * X / (a + X)
    sat = A / (1.0 + A)
    dX = r * X * (1.0 - X / K) - alpha * X * S - holling * I
    dS = m1 * alpha * X * S - u2 * lam * A * S - d * S - u1 * gamma * S * sat
    dI = m2 * holling * I + u2 * lam * A * S - (d + delta) * I - u1 * gamma * I * sat
    dA = u3 * omega + sigma * (S + I) - eta * A
    return dX, dS, dI, dA


@njit(cache=True, nogil=True)
def _costate_field(p, w, X, S, I, A, u1, u2, u3, l1, l2, l3, l4):
    r = p[0]
    K = p[1]
    alpha = p[2]
    phi = p[3]
    a = p[4]
    m1 = p[5]
    m2 = p[6]
    lam = p[7]
    d = p[8]
    delta = p[9]
    gamma = p[10]
    sigma = p[11]
    eta = p[12]
    Q = w[3]
    R = w[4]
    aX2 = (a + X) * (a + X)
    A1 = 1.0 + A
    dl1 = (l1 * (alpha * S + phi * alpha * a * I / aX2 - r * (1.0 - 2.0 * X / K))
           - l2 * m1 * alpha * S
           - l3 * m2 * phi * alpha * a * I / aX2)
    dl2 = (-2.0 * Q * S + l1 * alpha * X
           + l2 * (u1 * gamma * A / A1 + u2 * lam * A + d - m1 * alpha * X)
           - l3 * u2 * lam * A
           - l4 * sigma)
    dl3 = (l1 * phi * alpha * X / (a + X)
           + l3 * (u1 * gamma * A / A1 + d + delta - m2 * phi * alpha * X / (a + X))
           - l4 * sigma)
    dl4 = (2.0 * R * A
           + l2 * (u1 * gamma * S / (A1 * A1) + u2 * lam * S)
           + l3 * (u1 * gamma * I / (A1 * A1) - u2 * lam * S)
           + l4 * eta)
    return dl1, dl2, dl3, dl4


@njit(cache=True, nogil=True)
def forward_numba(P, S0, h, n, U):
    """RK4 forward sweep for every row of ``P``.

    Returns ``(values, status, fail_step)`` with ``values`` of shape
    ``(m, n + 1, 4)``. A failed row stops at ``fail_step`` and the rest of
    it is left as NaN.
    """
    m = P.shape[0]
    out = np.full((m, n + 1, 4), np.nan)
    status = np.zeros(m, dtype=np.int64)
    fail_step = np.full(m, -1, dtype=np.int64)
    h2 = 0.5 * h
    for k in range(m):
        p = P[k]
        x0 = S0[k, 0]
        x1 = S0[k, 1]
        x2 = S0[k, 2]
        x3 = S0[k, 3]
        out[k, 0, 0] = x0
        out[k, 0, 1] = x1
        out[k, 0, 2] = x2
        out[k, 0, 3] = x3
        for i in range(n):
            ua0 = U[i, 0]
            ua1 = U[i, 1]
            ua2 = U[i, 2]
            ub0 = U[i + 1, 0]
            ub1 = U[i + 1, 1]
            ub2 = U[i + 1, 2]
            um0 = 0.5 * (ua0 + ub0)
            um1 = 0.5 * (ua1 + ub1)
            um2 = 0.5 * (ua2 + ub2)
            a0, a1, a2, a3 = _field(p, x0, x1, x2, x3, ua0, ua1, ua2)
            b0, b1, b2, b3 = _field(p, x0 + h2 * a0, x1 + h2 * a1, x2 + h2 * a2,
                                    x3 + h2 * a3, um0, um1, um2)
            c0, c1, c2, c3 = _field(p, x0 + h2 * b0, x1 + h2 * b1, x2 + h2 * b2,
                                    x3 + h2 * b3, um0, um1, um2)
            d0, d1, d2, d3 = _field(p, x0 + h * c0, x1 + h * c1, x2 + h * c2,
                                    x3 + h * c3, ub0, ub1, ub2)
            x0 = x0 + h * (a0 + 2.0 * b0 + 2.0 * c0 + d0) / 6.0
            x1 = x1 + h * (a1 + 2.0 * b1 + 2.0 * c1 + d1) / 6.0
            x2 = x2 + h * (a2 + 2.0 * b2 + 2.0 * c2 + d2) / 6.0
            x3 = x3 + h * (a3 + 2.0 * b3 + 2.0 * c3 + d3) / 6.0
            if not (np.isfinite(x0) and np.isfinite(x1)
                    and np.isfinite(x2) and np.isfinite(x3)):
                status[k] = NONFINITE
                fail_step[k] = i + 1
                break
            if x0 < -CLAMP_TOL or x1 < -CLAMP_TOL or x2 < -CLAMP_TOL or x3 < -CLAMP_TOL:
                status[k] = NEGATIVE
                fail_step[k] = i + 1
                break
            if x0 < 0.0:
                x0 = 0.0
            if x1 < 0.0:
                x1 = 0.0
            if x2 < 0.0:
                x2 = 0.0
            if x3 < 0.0:
                x3 = 0.0
            out[k, i + 1, 0] = x0
            out[k, i + 1, 1] = x1
            out[k, i + 1, 2] = x2
            out[k, i + 1, 3] = x3
    return out, status, fail_step


@njit(cache=True, nogil=True)
def adjoint_numba(p, w, Xs, U, h, n):
    """Backward RK4 sweep of the costate system from a zero terminal value.

    ``Xs`` and ``U`` hold state and control on the grid nodes; RK4 stages at
    half steps use their linear interpolants. Returns ``(values, status)``.
    """
    out = np.zeros((n + 1, 4))
    l1 = 0.0
    l2 = 0.0
    l3 = 0.0
    l4 = 0.0
    h2 = 0.5 * h
    for i in range(n, 0, -1):
        xb = Xs[i]
        xa = Xs[i - 1]
        ub = U[i]
        ua = U[i - 1]
        xm0 = 0.5 * (xb[0] + xa[0])
        xm1 = 0.5 * (xb[1] + xa[1])
        xm2 = 0.5 * (xb[2] + xa[2])
        xm3 = 0.5 * (xb[3] + xa[3])
        um0 = 0.5 * (ub[0] + ua[0])
        um1 = 0.5 * (ub[1] + ua[1])
        um2 = 0.5 * (ub[2] + ua[2])
        a0, a1, a2, a3 = _costate_field(p, w, xb[0], xb[1], xb[2], xb[3],
                                        ub[0], ub[1], ub[2], l1, l2, l3, l4)
        b0, b1, b2, b3 = _costate_field(p, w, xm0, xm1, xm2, xm3, um0, um1, um2,
                                        l1 - h2 * a0, l2 - h2 * a1,
                                        l3 - h2 * a2, l4 - h2 * a3)
        c0, c1, c2, c3 = _costate_field(p, w, xm0, xm1, xm2, xm3, um0, um1, um2,
                                        l1 - h2 * b0, l2 - h2 * b1,
                                        l3 - h2 * b2, l4 - h2 * b3)
        d0, d1, d2, d3 = _costate_field(p, w, xa[0], xa[1], xa[2], xa[3],
                                        ua[0], ua[1], ua[2],
                                        l1 - h * c0, l2 - h * c1,
                                        l3 - h * c2, l4 - h * c3)
        l1 = l1 - h * (a0 + 2.0 * b0 + 2.0 * c0 + d0) / 6.0
        l2 = l2 - h * (a1 + 2.0 * b1 + 2.0 * c1 + d1) / 6.0
        l3 = l3 - h * (a2 + 2.0 * b2 + 2.0 * c2 + d2) / 6.0
        l4 = l4 - h * (a3 + 2.0 * b3 + 2.0 * c3 + d3) / 6.0
        if not (np.isfinite(l1) and np.isfinite(l2) and np.isfinite(l3) and np.isfinite(l4)):
            return out, NONFINITE
        out[i - 1, 0] = l1
        out[i - 1, 1] = l2
        out[i - 1, 2] = l3
        out[i - 1, 3] = l4
    return out, OK


# ---------------------------------------------------------------------------
# numpy kernels
# ---------------------------------------------------------------------------

def field_numpy(P, X, S, I, A, u1, u2, u3):
    """Controlled vector field evaluated columnwise; ``P`` has shape (m, 14)."""
    r, K, alpha, phi, a, m1, m2, lam, d, delta, gamma, sigma, eta, omega = P.T
    holling = phi * alpha * X / (a + X)
    sat = A / (1.0 + A)
    dX = r * X * (1.0 - X / K) - alpha * X * S - holling * I
    dS = m1 * alpha * X * S - u2 * lam * A * S - d * S - u1 * gamma * S * sat
    dI = m2 * holling * I + u2 * lam * A * S - (d + delta) * I - u1 * gamma * I * sat
    dA = u3 * omega + sigma * (S + I) - eta * A
    return dX, dS, dI, dA


def forward_numpy(P, S0, h, n, U):
    """Vectorised counterpart of :func:`forward_numba` (same signature)."""
    P = np.ascontiguousarray(P, dtype=float)
    m = P.shape[0]
    out = np.full((m, n + 1, 4), np.nan)
    status = np.zeros(m, dtype=np.int64)
    fail_step = np.full(m, -1, dtype=np.int64)
    x = [np.array(S0[:, j], dtype=float) for j in range(4)]
    for j in range(4):
        out[:, 0, j] = x[j]
    alive = np.ones(m, dtype=bool)
    h2 = 0.5 * h
    for i in range(n):
        ua = U[i]
        ub = U[i + 1]
        um = 0.5 * (ua + ub)
        k1 = field_numpy(P, *x, ua[0], ua[1], ua[2])
        k2 = field_numpy(P, *(x[j] + h2 * k1[j] for j in range(4)), um[0], um[1], um[2])
        k3 = field_numpy(P, *(x[j] + h2 * k2[j] for j in range(4)), um[0], um[1], um[2])
        k4 = field_numpy(P, *(x[j] + h * k3[j] for j in range(4)), ub[0], ub[1], ub[2])
        x = [x[j] + h * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) / 6.0 for j in range(4)]
        stacked = np.stack(x, axis=1)
        bad_nan = alive & ~np.all(np.isfinite(stacked), axis=1)
        bad_neg = alive & ~bad_nan & np.any(stacked < -CLAMP_TOL, axis=1)
        if bad_nan.any() or bad_neg.any():
            status[bad_nan] = NONFINITE
            status[bad_neg] = NEGATIVE
            fail_step[bad_nan | bad_neg] = i + 1
            alive &= ~(bad_nan | bad_neg)
        for j in range(4):
            x[j] = np.where(alive, np.maximum(x[j], 0.0), np.nan)
            out[:, i + 1, j] = x[j]
        if not alive.any():
            break
    return out, status, fail_step


def jacobian_numpy(p, Xs, U):
    """Controlled Jacobian at each row of ``Xs``; returns shape (N, 4, 4)."""
    r, K, alpha, phi, a, m1, m2, lam, d, delta, gamma, sigma, eta, omega = p
    X, S, I, A = (Xs[:, j] for j in range(4))
    u1, u2, u3 = (U[:, j] for j in range(3))
    aX = a + X
    A1 = 1.0 + A
    J = np.zeros((Xs.shape[0], 4, 4))
    J[:, 0, 0] = r * (1.0 - 2.0 * X / K) - alpha * S - phi * alpha * a * I / aX**2
    J[:, 0, 1] = -alpha * X
    J[:, 0, 2] = -phi * alpha * X / aX
    J[:, 1, 0] = m1 * alpha * S
    J[:, 1, 1] = m1 * alpha * X - u2 * lam * A - d - u1 * gamma * A / A1
    J[:, 1, 3] = -u2 * lam * S - u1 * gamma * S / A1**2
    J[:, 2, 0] = m2 * phi * alpha * a * I / aX**2
    J[:, 2, 1] = u2 * lam * A
    J[:, 2, 2] = m2 * phi * alpha * X / aX - d - delta - u1 * gamma * A / A1
    J[:, 2, 3] = u2 * lam * S - u1 * gamma * I / A1**2
    J[:, 3, 1] = sigma
    J[:, 3, 2] = sigma
    J[:, 3, 3] = -eta
    return J


def _cost_gradient(w, Xs):
    g = np.zeros_like(Xs)
    g[:, 1] = 2.0 * w[3] * Xs[:, 1]
    g[:, 3] = -2.0 * w[4] * Xs[:, 3]
    return g


def adjoint_numpy(p, w, Xs, U, h, n):
    """Matrix-form counterpart of :func:`adjoint_numba` (same signature)."""
    Xm = 0.5 * (Xs[1:] + Xs[:-1])
    Um = 0.5 * (U[1:] + U[:-1])
    # Transposed Jacobians, negated: lam' = JT @ lam + c
    JT_node = -np.transpose(jacobian_numpy(p, Xs, U), (0, 2, 1))
    JT_mid = -np.transpose(jacobian_numpy(p, Xm, Um), (0, 2, 1))
    c_node = -_cost_gradient(w, Xs)
    c_mid = -_cost_gradient(w, Xm)
    out = np.zeros((n + 1, 4))
    lam = np.zeros(4)
    h2 = 0.5 * h
    for i in range(n, 0, -1):
        k1 = JT_node[i] @ lam + c_node[i]
        k2 = JT_mid[i - 1] @ (lam - h2 * k1) + c_mid[i - 1]
        k3 = JT_mid[i - 1] @ (lam - h2 * k2) + c_mid[i - 1]
        k4 = JT_node[i - 1] @ (lam - h * k3) + c_node[i - 1]
        lam = lam - h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        if not np.all(np.isfinite(lam)):
            return out, NONFINITE
        out[i - 1] = lam
    return out, OK


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def forward(P, S0, h, n, U, backend=None):
    backend = backend or BACKEND
    P = np.ascontiguousarray(P, dtype=float)
    S0 = np.ascontiguousarray(S0, dtype=float)
    U = np.ascontiguousarray(U, dtype=float)
    if backend == "numba":
        return forward_numba(P, S0, float(h), int(n), U)
    return forward_numpy(P, S0, float(h), int(n), U)


def adjoint(p, w, Xs, U, h, n, backend=None):
    backend = backend or BACKEND
    p = np.ascontiguousarray(p, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    Xs = np.ascontiguousarray(Xs, dtype=float)
    U = np.ascontiguousarray(U, dtype=float)
    if backend == "numba":
        return adjoint_numba(p, w, Xs, U, float(h), int(n))
    return adjoint_numpy(p, w, Xs, U, float(h), int(n))
