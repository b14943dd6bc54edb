"""Exception types raised by the estimators and the math layer."""


class OneBitError(Exception):
    """Base class for all package errors."""


class DomainError(OneBitError, ValueError):
    """Argument outside the domain of a special function."""


class SaturationError(OneBitError):
    """Empirical sign probability is exactly 0 or 1."""


class IllPosedError(OneBitError):
    """Empirical probability sits at (or on the wrong side of) 1/2, so the
    threshold carries no amplitude information."""


class UnidentifiableError(OneBitError):
    """The schedule/data cannot identify the requested parameter."""

    def __init__(self, message, channel=None):
        super().__init__(message)
        self.channel = channel


class ConvergenceError(OneBitError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate
