"""Fixed-step RK4 integration of the state and adjoint systems.

Forward sweeps clamp roundoff undershoot in ``[-1e-9, 0)`` to zero and
raise :class:`PositivityViolated` below that. Controls are given on the
grid nodes and interpolated linearly at RK4 half steps; the backward
adjoint sweep treats the stored state the same way.
"""

import dataclasses
from typing import Optional

import numpy as np

from . import _kernels
from .errors import GridMismatch, PositivityViolated, StepUnstable
from .model import ModelParams

DEFAULT_STEP = 0.05
BOUND_SLACK = 1e-6


@dataclasses.dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on ``[t0, tf]`` with ``n_steps`` intervals."""

    t0: float
    tf: float
    n_steps: int

    def __post_init__(self):
        if not self.tf > self.t0:
            raise ValueError(f"tf must exceed t0 (t0={self.t0}, tf={self.tf})")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps!r}")

    @classmethod
    def from_step(cls, tf, h=DEFAULT_STEP, t0=0.0):
        """Grid whose step is ``h`` rounded so that it divides ``tf - t0``."""
        n = max(1, int(round((tf - t0) / h)))
        return cls(float(t0), float(tf), n)

    @property
    def h(self):
        return (self.tf - self.t0) / self.n_steps

    @property
    def times(self):
        return self.t0 + self.h * np.arange(self.n_steps + 1)

    def __len__(self):
        return self.n_steps + 1


@dataclasses.dataclass(frozen=True)
class Trajectory:
    """Node values on a :class:`TimeGrid`; ``values`` has shape (n_steps + 1, k)."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape[0] != len(self.grid):
            raise GridMismatch(
                f"{self.values.shape[0]} rows for a grid with {len(self.grid)} nodes")

    @property
    def times(self):
        return self.grid.times

    @property
    def final(self):
        return self.values[-1]

    def column(self, j):
        return self.values[:, j]


@dataclasses.dataclass(frozen=True)
class ControlSchedule:
    """Controls ``(u1, u2, u3)`` on the grid nodes, each within [0, 1]."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (len(self.grid), 3):
            raise GridMismatch(
                f"control array of shape {self.values.shape} does not fit a "
                f"grid with {len(self.grid)} nodes")
        if np.any(self.values < 0.0) or np.any(self.values > 1.0):
            raise ValueError("control values must lie in [0, 1]")

    @classmethod
    def constant(cls, grid, u):
        values = np.tile(np.asarray(u, dtype=float), (len(grid), 1))
        return cls(grid, values)


@dataclasses.dataclass(frozen=True)
class BoundsCertificate:
    L: float
    sup_XSI: float
    sup_A: float
    bound_XSI: float
    bound_A: float
    satisfied: bool
    tail_only: bool = False


def _control_array(grid, u):
    if u is None:
        return np.ones((len(grid), 3))
    if u.grid != grid:
        raise GridMismatch("control schedule lives on a different grid")
    return u.values


def _raise_for_status(status, step, h):
    if status == _kernels.NONFINITE:
        raise StepUnstable(f"non-finite state at step {step} (t={step * h:g})", step=step)
    if status == _kernels.NEGATIVE:
        raise PositivityViolated(
            f"state component below -{_kernels.CLAMP_TOL:g} at step {step} (t={step * h:g})",
            step=step)


def integrate_forward(p: ModelParams, s0, grid: TimeGrid,
                      u: Optional[ControlSchedule] = None, backend=None) -> Trajectory:
    """Classical RK4 from ``s0`` over ``grid``.

    Without ``u`` the uncontrolled system is integrated. Raises
    :class:`StepUnstable` or :class:`PositivityViolated` on failure.
    """
    s0 = np.asarray(s0, dtype=float).reshape(1, 4)
    if np.any(s0 < 0.0):
        raise PositivityViolated("initial state has a negative component", step=0)
    U = _control_array(grid, u)
    out, status, fail = _kernels.forward(p.as_array()[None, :], s0, grid.h,
                                         grid.n_steps, U, backend=backend)
    _raise_for_status(status[0], fail[0], grid.h)
    return Trajectory(grid, out[0])


def integrate_many(params, s0, grid: TimeGrid, u=None, backend=None):
    """Integrate a batch of parameter sets; no exceptions for failed rows.

    Args:
        params: sequence of :class:`ModelParams`.
        s0: one initial state, or one per parameter set.

    Returns:
        ``(values, status, fail_step)``: values of shape (m, n_steps + 1, 4)
        with NaN after a failure, status codes from :mod:`_kernels`.
    """
    P = np.array([p.as_array() for p in params], dtype=float).reshape(-1, len(_kernels.PARAM_ORDER))
    S0 = np.broadcast_to(np.asarray(s0, dtype=float), (P.shape[0], 4))
    U = _control_array(grid, u)
    return _kernels.forward(P, S0, grid.h, grid.n_steps, U, backend=backend)


def _weight_array(weights):
    if hasattr(weights, "as_array"):
        return weights.as_array()
    return np.asarray(weights, dtype=float)


def integrate_adjoint_backward(p: ModelParams, state: Trajectory, u: ControlSchedule,
                               weights, grid: Optional[TimeGrid] = None,
                               backend=None) -> Trajectory:
    """RK4 for the costates backward from ``lambda(tf) = 0``.

    ``weights`` is an ``ObjectiveWeights`` or a ``(P1, P2, P3, Q, R)`` vector.
    """
    grid = grid or state.grid
    if state.grid != grid or u.grid != grid:
        raise GridMismatch("state, control and adjoint grids must coincide")
    out, status = _kernels.adjoint(p.as_array(), _weight_array(weights), state.values,
                                   u.values, grid.h, grid.n_steps, backend=backend)
    if status != _kernels.OK:
        raise StepUnstable("non-finite adjoint value in the backward sweep")
    return Trajectory(grid, out)


def bounds_certificate(p: ModelParams, traj: Trajectory) -> BoundsCertificate:
    """Check a trajectory against the asymptotic invariant region.

    If the initial state already lies outside the region only the tail
    half of the trajectory is tested, since the bound is asymptotic.
    """
    L = p.K * (p.r + p.d) ** 2 / (4.0 * p.r)
    bound_xsi = L / p.d
    bound_a = (p.omega * p.d + p.sigma * L) / (p.eta * p.d)
    v = traj.values
    xsi = v[:, 0] + v[:, 1] + v[:, 2]
    tol = 1.0 + BOUND_SLACK
    tail_only = bool(xsi[0] > bound_xsi * tol or v[0, 3] > bound_a * tol)
    if tail_only:
        start = (len(v) - 1) // 2
        xsi = xsi[start:]
        av = v[start:, 3]
    else:
        av = v[:, 3]
    sup_xsi = float(np.max(xsi))
    sup_a = float(np.max(av))
    ok = sup_xsi <= bound_xsi * tol and sup_a <= bound_a * tol
    return BoundsCertificate(L, sup_xsi, sup_a, bound_xsi, bound_a, bool(ok), tail_only)
