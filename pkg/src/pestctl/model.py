"""Crop, pest and awareness model: parameters, state and vector fields.

The state is ``(X, S, I, A)``: crop biomass, susceptible pests, infected
pests and the awareness level. ``rhs`` is the uncontrolled system and
``rhs_controlled`` the version with chemical (u1), biological (u2) and
advertisement (u3) controls; with unit controls the two coincide exactly.
"""

import dataclasses
import math
from typing import NamedTuple

import numpy as np

from . import _kernels
from ._kernels import PARAM_ORDER
from .errors import InvariantViolation, NumericDomainError, SingularityError

# phi is not given by the published parameter table; 0.5 is our choice.
UNPUBLISHED_DEFAULTS = {"phi": 0.5}


@dataclasses.dataclass(frozen=True)
class ModelParams:
    """Biological parameters (rates are per day).

    Attributes:
        r: crop intrinsic growth rate.
        K: crop carrying capacity.
        alpha: pest attack rate on the crop.
        phi: attack-rate reduction of infected pests (< 1).
        a: half-saturation constant of the infected-pest functional response.
        m1, m2: conversion efficiencies of susceptible / infected pests.
        lam: awareness-driven bio-pesticide infection rate (``lambda``).
        d: natural pest mortality.
        delta: extra mortality of infected pests.
        gamma: chemical-pesticide kill rate driven by awareness.
        sigma: local awareness growth per pest.
        eta: awareness fading rate.
        omega: global awareness recruitment.
    """

    r: float = 0.05
    K: float = 1.0
    alpha: float = 0.025
    phi: float = UNPUBLISHED_DEFAULTS["phi"]
    a: float = 0.2
    m1: float = 0.8
    m2: float = 0.6
    lam: float = 0.025
    d: float = 0.01
    delta: float = 0.1
    gamma: float = 0.025
    sigma: float = 0.015
    eta: float = 0.015
    omega: float = 0.003

    def __post_init__(self):
        for name in PARAM_ORDER:
            value = getattr(self, name)
            if not math.isfinite(value):
                raise InvariantViolation(f"parameter {name} must be finite, got {value!r}")

    @classmethod
    def table1(cls, phi=UNPUBLISHED_DEFAULTS["phi"]):
        """Published parameter table; ``phi`` is not part of it."""
        return cls(phi=phi)

    def validate(self):
        """Raise :class:`InvariantViolation` unless the model invariants hold."""
        bad = [n for n in PARAM_ORDER if not getattr(self, n) > 0.0]
        if bad:
            raise InvariantViolation("parameters must be strictly positive: " + ", ".join(bad))
        if not self.m1 > self.m2:
            raise InvariantViolation(f"m1 > m2 required (m1={self.m1!r}, m2={self.m2!r})")
        if not self.phi < 1.0:
            raise InvariantViolation(f"phi < 1 required (phi={self.phi!r})")
        return self

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def as_array(self):
        return np.array([getattr(self, n) for n in PARAM_ORDER], dtype=float)

    def as_dict(self):
        return {n: getattr(self, n) for n in PARAM_ORDER}


class State(NamedTuple):
    X: float
    S: float
    I: float
    A: float


class ControlTriple(NamedTuple):
    u1: float
    u2: float
    u3: float


UNIT_CONTROL = ControlTriple(1.0, 1.0, 1.0)


def _check_finite(values, what):
    if not np.all(np.isfinite(values)):
        raise NumericDomainError(f"{what} produced a non-finite value: {values}")
    return values


def rhs_controlled(p: ModelParams, s, u) -> np.ndarray:
    """Right-hand side of the controlled system at state ``s`` and controls ``u``."""
    X, S, I, A = (float(v) for v in s)
    u1, u2, u3 = (float(v) for v in u)
    if X + p.a == 0.0 or A + 1.0 == 0.0:
        raise SingularityError("a + X or 1 + A vanished")
    with np.errstate(all="ignore"):
        out = np.array(_kernels.field_numpy(p.as_array(), X, S, I, A, u1, u2, u3))
    return _check_finite(out, "rhs")


def rhs(p: ModelParams, s) -> np.ndarray:
    """Right-hand side of the uncontrolled system (all controls at 1)."""
    return rhs_controlled(p, s, UNIT_CONTROL)


def jacobian(p: ModelParams, s, u=UNIT_CONTROL) -> np.ndarray:
    """Analytic 4x4 Jacobian of :func:`rhs_controlled` with respect to the state.

    The default ``u`` gives the Jacobian of the uncontrolled system.
    """
    xs = np.asarray(s, dtype=float).reshape(1, 4)
    if xs[0, 0] + p.a == 0.0 or xs[0, 3] + 1.0 == 0.0:
        raise SingularityError("a + X or 1 + A vanished")
    us = np.asarray(u, dtype=float).reshape(1, 3)
    with np.errstate(all="ignore"):
        J = _kernels.jacobian_numpy(p.as_array(), xs, us)[0]
    return _check_finite(J, "jacobian")
