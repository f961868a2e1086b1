"""Exception and warning classes raised by pestctl."""


class PestctlError(Exception):
    """Base class for every error raised by this package."""


class NumericDomainError(PestctlError, ArithmeticError):
    """A computation produced a non-finite value or left its domain."""


class SingularityError(NumericDomainError):
    """A denominator of the model (a + X or 1 + A) vanished."""


class DegenerateDenominator(NumericDomainError):
    """The shared denominator of the cubic coefficients is zero."""


class StepUnstable(NumericDomainError):
    """An integrator step produced NaN or infinity."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class PositivityViolated(PestctlError):
    """A state component fell below the roundoff clamp threshold."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConsistencyError(PestctlError):
    """A closed-form stability verdict disagrees with the eigenvalues."""


class NoCoexistence(PestctlError):
    """No interior equilibrium exists at the requested parameters."""


class GridMismatch(PestctlError, ValueError):
    """Two trajectories or schedules live on different time grids."""


class ConfigError(PestctlError):
    """Base class for configuration problems (CLI exit code 2)."""


class ParseError(ConfigError):
    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class UnknownKey(ConfigError, KeyError):
    def __init__(self, key, lineno=None):
        msg = f"unknown key {key!r}"
        if lineno is not None:
            msg = f"line {lineno}: {msg}"
        super().__init__(msg)
        self.key = key
        self.lineno = lineno

    def __str__(self):
        return self.args[0]


class InvariantViolation(ConfigError, ValueError):
    """Parameters or settings break a model invariant (e.g. m1 <= m2)."""


class NotConverged(RuntimeWarning):
    """Issued when the forward-backward sweep hits its iteration cap."""
