"""
Error types raised by the multiscale integration toolkit.

Every error derives from MultiscaleError so callers can catch the whole
family at once; the CLI maps them onto exit codes.
"""

from typing import Any, Optional


class MultiscaleError(Exception):
    """Base class for all toolkit errors."""


class ContractViolation(MultiscaleError, ValueError):
    """Inputs break a precondition (shapes, weight length, parameter range)."""


class DomainError(MultiscaleError, ValueError):
    """A formula was evaluated outside the range it is defined on."""


class BoundInapplicableError(MultiscaleError):
    """The bound's assumptions fail (e.g. A8 makes the denominator nonpositive)."""


class DivergenceError(MultiscaleError, ArithmeticError):
    """
    A state component became non-finite.

    Attributes:
        component: 'x' or 'y'
        step_index: macro (or micro) index at which the failure happened
        last_state: last finite State before the failure
        trajectory: partial Trajectory up to the failure, when available
    """

    def __init__(self, message: str, component: str = "", step_index: int = -1,
                 last_state: Any = None, trajectory: Any = None):
        super().__init__(message)
        self.component = component
        self.step_index = step_index
        self.last_state = last_state
        self.trajectory = trajectory


class AccuracyError(MultiscaleError):
    """A reference oracle failed its step-halving self-check."""

    def __init__(self, message: str, discrepancy: float = float("nan"),
                 step: Optional[float] = None):
        super().__init__(message)
        self.discrepancy = discrepancy
        self.step = step


class SpecError(MultiscaleError):
    """Malformed experiment spec or unknown preset."""


class ExperimentError(MultiscaleError):
    """A sweep point failed; names the swept value."""

    def __init__(self, message: str, sweep_value: float = float("nan"),
                 cause: Optional[BaseException] = None):
        super().__init__(message)
        self.sweep_value = sweep_value
        self.cause = cause

    @property
    def diverged(self) -> bool:
        return isinstance(self.cause, DivergenceError)
