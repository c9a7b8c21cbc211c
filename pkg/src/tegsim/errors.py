"""Exception types raised across the package."""


class TegsimError(Exception):
    """Base class for all package errors."""


class CapacityError(TegsimError, ValueError):
    """Requested Fock space exceeds the dense-matrix cap."""


class ShapeError(TegsimError, ValueError):
    """Operator dimensions do not match."""


class DegeneracyError(TegsimError):
    """A kernel or spectrum is degenerate where uniqueness is required."""


class IntegrationError(TegsimError):
    """Time stepping lost trace or positivity.

    The offending time is available as ``self.time``.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class InfeasibleError(TegsimError, ValueError):
    """Target value lies outside the attainable range."""


class ConfigError(TegsimError, ValueError):
    """Invalid configuration or parameters."""


class SingularSystemError(TegsimError):
    """A linear solve hit a (near-)singular matrix."""


class BoundaryExitError(TegsimError):
    """A trajectory left the spatial grid.

    The exit time is available as ``self.time``.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class InsufficientSpanError(TegsimError, ValueError):
    """A signal has too few zero crossings to extract a frequency."""
