"""Optimal integrated pest management via Pontryagin's minimum principle.

The cost is

    J(u) = int_0^tf  P1 u1^2/2 + P2 u2^2/2 + P3 u3^2/2 + Q S^2 - R A^2  dt,

minimised over controls in [0, 1]^3. :func:`fbsm` solves the optimality
system with the forward-backward sweep: state forward, costates backward
from zero terminal values, then a relaxed update towards the pointwise
minimiser of the Hamiltonian.
"""

import dataclasses
import warnings
from typing import NamedTuple

import numpy as np

from .errors import GridMismatch, NotConverged
from .integrate import (ControlSchedule, TimeGrid, Trajectory, integrate_adjoint_backward,
                        integrate_forward)
from .model import ControlTriple, ModelParams, rhs_controlled

PUBLISHED_WEIGHTS = (0.8, 0.5, 0.5, 10.0, 10.0)


class ObjectiveWeights(NamedTuple):
    P1: float = PUBLISHED_WEIGHTS[0]
    P2: float = PUBLISHED_WEIGHTS[1]
    P3: float = PUBLISHED_WEIGHTS[2]
    Q: float = PUBLISHED_WEIGHTS[3]
    R: float = PUBLISHED_WEIGHTS[4]

    def validate(self):
        if min(self.P1, self.P2, self.P3) <= 0:
            raise ValueError("control weights P1, P2, P3 must be strictly positive")
        if min(self.Q, self.R) < 0:
            raise ValueError("state weights Q, R must be nonnegative")
        return self

    def as_array(self):
        return np.array(self, dtype=float)


@dataclasses.dataclass
class SweepResult:
    state: Trajectory
    adjoint: Trajectory
    control: ControlSchedule
    objective: float
    iterations: int
    converged: bool
    history: list


def running_cost(w: ObjectiveWeights, X):
    """Integrand of J at state/control rows ``X = [X, S, I, A, u1, u2, u3]``."""
    S, A, u1, u2, u3 = X[..., 1], X[..., 3], X[..., 4], X[..., 5], X[..., 6]
    return (0.5 * (w.P1 * u1 ** 2 + w.P2 * u2 ** 2 + w.P3 * u3 ** 2)
            + w.Q * S ** 2 - w.R * A ** 2)


def objective(p: ModelParams, weights: ObjectiveWeights, state: Trajectory,
              u: ControlSchedule) -> float:
    """Composite trapezoid value of J on the common grid."""
    if state.grid != u.grid:
        raise GridMismatch("state and control grids differ")
    f = running_cost(weights, np.hstack([state.values, u.values]))
    h = state.grid.h
    return float(h * (f.sum() - 0.5 * (f[0] + f[-1])))


def hamiltonian(p: ModelParams, weights: ObjectiveWeights, s, lam, u) -> float:
    """Running cost plus ``lam . f(s, u)``."""
    row = np.concatenate([np.asarray(s, dtype=float), np.asarray(u, dtype=float)])
    return float(running_cost(weights, row) + np.dot(lam, rhs_controlled(p, s, u)))


def adjoint_rhs(p: ModelParams, weights: ObjectiveWeights, s, lam, u) -> np.ndarray:
    """Costate derivative ``-dH/dx`` written out term by term."""
    X, S, I, A = (float(v) for v in s)
    l1, l2, l3, l4 = (float(v) for v in lam)
    u1, u2, _ = (float(v) for v in u)
    al, ph, a = p.alpha, p.phi, p.a
    aX2 = (a + X) ** 2
    A1 = 1.0 + A
    return np.array([
        l1 * (al * S + ph * al * a * I / aX2 - p.r * (1 - 2 * X / p.K))
        - l2 * p.m1 * al * S - l3 * p.m2 * ph * al * a * I / aX2,
        -2 * weights.Q * S + l1 * al * X
        + l2 * (u1 * p.gamma * A / A1 + u2 * p.lam * A + p.d - p.m1 * al * X)
        - l3 * u2 * p.lam * A - l4 * p.sigma,
        l1 * ph * al * X / (a + X)
        + l3 * (u1 * p.gamma * A / A1 + p.d + p.delta - p.m2 * ph * al * X / (a + X))
        - l4 * p.sigma,
        2 * weights.R * A
        + l2 * (u1 * p.gamma * S / A1 ** 2 + u2 * p.lam * S)
        + l3 * (u1 * p.gamma * I / A1 ** 2 - u2 * p.lam * S)
        + l4 * p.eta,
    ])


def pmp_control_unclamped(p: ModelParams, weights: ObjectiveWeights, s, lam):
    """Stationary point of the Hamiltonian in u (vectorised over rows)."""
    s = np.asarray(s, dtype=float)
    lam = np.asarray(lam, dtype=float)
    S, I, A = s[..., 1], s[..., 2], s[..., 3]
    l2, l3, l4 = lam[..., 1], lam[..., 2], lam[..., 3]
    u1 = (l2 * S + l3 * I) * p.gamma * A / (weights.P1 * (1 + A))
    u2 = (l2 - l3) * p.lam * A * S / weights.P2
    u3 = -l4 * p.omega / weights.P3
    return np.stack([u1, u2, u3], axis=-1)


def pmp_control(p: ModelParams, weights: ObjectiveWeights, s, lam):
    """Pointwise minimiser of the Hamiltonian over [0, 1]^3.

    A single state/costate pair gives a :class:`ControlTriple`; stacked
    rows give an array of shape (n, 3).
    """
    u = np.clip(pmp_control_unclamped(p, weights, s, lam), 0.0, 1.0)
    if u.ndim == 1:
        return ControlTriple(*map(float, u))
    return u


def control_hessian(p: ModelParams, weights: ObjectiveWeights, s, lam, u, h=1e-3):
    """Finite-difference Hessian of H in the controls (should be diag(P))."""
    u = np.asarray(u, dtype=float)
    H = np.zeros((3, 3))
    E = np.eye(3) * h
    for i in range(3):
        for j in range(3):
            H[i, j] = (hamiltonian(p, weights, s, lam, u + E[i] + E[j])
                       - hamiltonian(p, weights, s, lam, u + E[i] - E[j])
                       - hamiltonian(p, weights, s, lam, u - E[i] + E[j])
                       + hamiltonian(p, weights, s, lam, u - E[i] - E[j])) / (4 * h * h)
    return H


def evaluate_constant(p: ModelParams, weights: ObjectiveWeights, s0, grid: TimeGrid, u, backend=None):
    """State trajectory and J for a control held constant over the horizon."""
    sched = ControlSchedule.constant(grid, u)
    traj = integrate_forward(p, s0, grid, sched, backend=backend)
    return traj, objective(p, weights, traj, sched)


def _converged(u_new, u_old, tol):
    change = np.abs(u_new - u_old).sum(axis=0)
    size = np.abs(u_new).sum(axis=0)
    return bool(np.all(tol * size - change >= 0.0)), change


def fbsm(p: ModelParams, weights: ObjectiveWeights, s0, grid: TimeGrid, relaxation=0.5,
         tol=1e-3, max_iter=200, u0=None, backend=None) -> SweepResult:
    """Forward-backward sweep for the optimality system.

    Starts from ``u = 0`` unless ``u0`` is given. Each pass integrates the
    state forward, the costates backward, and moves the control a fraction
    ``relaxation`` of the way to :func:`pmp_control`. The sweep stops when,
    for every channel, ``tol * sum|u_new| - sum|u_new - u_old| >= 0``.

    If ``max_iter`` passes do not converge a :class:`NotConverged` warning
    is issued and the iterate with the lowest objective is returned with
    ``converged=False``.
    """
    weights = ObjectiveWeights(*weights).validate()
    if not 0.0 < relaxation <= 1.0:
        raise ValueError("relaxation must lie in (0, 1]")
    if tol <= 0:
        raise ValueError("tol must be positive")
    u = np.zeros((len(grid), 3)) if u0 is None else np.array(u0.values, dtype=float)
    history = []
    best = None
    for it in range(1, max_iter + 1):
        sched = ControlSchedule(grid, u)
        state = integrate_forward(p, s0, grid, sched, backend=backend)
        J = objective(p, weights, state, sched)
        adj = integrate_adjoint_backward(p, state, sched, weights, backend=backend)
        if best is None or J < best[0]:
            best = (J, state, adj, sched, it)
        target = pmp_control(p, weights, state.values, adj.values)
        u_new = np.clip((1.0 - relaxation) * u + relaxation * target, 0.0, 1.0)
        done, change = _converged(u_new, u, tol)
        history.append({"iteration": it, "objective": J,
                        "max_change": float(np.max(np.abs(u_new - u))),
                        "l1_change": change.tolist()})
        u = u_new
        if done:
            sched = ControlSchedule(grid, u)
            state = integrate_forward(p, s0, grid, sched, backend=backend)
            adj = integrate_adjoint_backward(p, state, sched, weights, backend=backend)
            J = objective(p, weights, state, sched)
            return SweepResult(state, adj, sched, J, it, True, history)
    warnings.warn(f"forward-backward sweep did not converge in {max_iter} iterations", NotConverged)
    J, state, adj, sched, it = best
    return SweepResult(state, adj, sched, J, max_iter, False, history)
