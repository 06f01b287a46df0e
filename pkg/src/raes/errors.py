"""Exception hierarchy shared by every subsystem."""

from __future__ import annotations


class RaesError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameter(RaesError, ValueError):
    pass


class GenerationFailure(RaesError):
    """A randomized generator ran out of its rejection budget."""


class ConvergenceFailure(RaesError):
    """Power iteration did not reach the requested tolerance.

    The best estimate seen so far is kept on the exception so callers can
    decide whether it is good enough.
    """

    def __init__(self, message: str, estimate: float, residual: float, iterations: int):
        super().__init__(message)
        self.estimate = estimate
        self.residual = residual
        self.iterations = iterations


class SizeLimitError(RaesError):
    pass


class ClassificationViolation(RaesError, AssertionError):
    """A rejected request landed outside the semi-saturated and critical sets."""


class PreconditionError(RaesError, ValueError):
    pass


class DecodeError(RaesError):
    """Malformed or inconsistent encoded data. ``section`` names where it failed."""

    def __init__(self, message: str, section: str | None = None):
        if section is not None:
            message = f"[{section}] {message}"
        super().__init__(message)
        self.section = section


class InternalError(RaesError, AssertionError):
    pass
