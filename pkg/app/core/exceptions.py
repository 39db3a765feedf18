"""
Domain exceptions raised by the numerical core and the drivers.
"""

from typing import Any, Optional


class DampOptError(Exception):
    """Base class for every error raised by DampOpt."""

    # Set by the optimization drivers to the report accumulated before the failure.
    partial_report: Any = None


class InvalidInputError(DampOptError, ValueError):
    """Input has the wrong shape, symmetry, range or contains duplicates."""


class NotPositiveDefiniteError(InvalidInputError):
    """A matrix that must be symmetric positive definite is not."""


class ConfigError(InvalidInputError):
    """Run configuration or system definition is invalid."""


class StabilityError(DampOptError):
    """A Lyapunov operator is not asymptotically stable."""


class ResonanceError(DampOptError):
    """A shifted solve hits an exact root of s^2 + 2*alpha*omega*s + omega^2."""


class SingularCoreError(DampOptError):
    """The l x l Woodbury core matrix is numerically singular."""

    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition number {condition:.3e})")
        self.condition = condition


class RankError(DampOptError):
    """Requested order exceeds the available numerical rank."""


class LivelockError(DampOptError):
    """Error-indicator restarts stopped making progress."""


class EarlyExit(DampOptError):
    """
    Raised by an objective to stop the surrounding optimization.

    Carries the parameters at which the objective refused to continue.
    """

    def __init__(self, message: str, positions: Any = None, gains: Any = None, value: Optional[float] = None):
        super().__init__(message)
        self.positions = positions
        self.gains = gains
        self.value = value


class SimplexAborted(DampOptError):
    """
    Nelder-Mead stopped because the objective raised EarlyExit.

    Attributes:
        x_best: best vertex found so far
        f_best: its objective value
        x_trigger: point whose evaluation raised
        trace: per-iteration trace up to the abort
        cause: the EarlyExit instance
    """

    def __init__(self, x_best, f_best, x_trigger, trace, cause: EarlyExit):
        super().__init__(f"optimization aborted: {cause}")
        self.x_best = x_best
        self.f_best = f_best
        self.x_trigger = x_trigger
        self.trace = trace
        self.cause = cause
