"""Exception hierarchy shared by every module."""


class LandauError(Exception):
    """Base class for all library errors."""


class ContractError(LandauError, ValueError):
    """A documented precondition was violated by the caller."""


class AccuracyError(LandauError, ArithmeticError):
    """A quadrature or transform could not reach its tolerance.

    ``achieved`` carries the best error estimate that was obtained.
    """

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class UnsupportedError(LandauError, NotImplementedError):
    """The requested operation is not available for this representation."""


class DomainError(LandauError):
    """A trajectory or evaluation point left the interpolation domain."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class StraighteningError(LandauError):
    """The fixed-point iteration for the straightening map stopped contracting."""

    def __init__(self, message, ratio=None):
        super().__init__(message)
        self.ratio = ratio


class ConfigError(LandauError):
    """A run configuration could not be parsed or validated."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
