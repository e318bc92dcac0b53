"""Exception types raised across the package."""


class MarsNavError(Exception):
    """Base class for all package errors."""


class ParameterError(MarsNavError, ValueError):
    """A construction parameter is outside its valid range."""


class OutOfBoundsError(MarsNavError, ValueError):
    """A terrain query fell outside the modeled world."""


class InsufficientDataError(MarsNavError, ValueError):
    """Too few points or correspondences for an estimate."""


class DegenerateGeometryError(MarsNavError, ValueError):
    """Input points do not constrain the estimate (e.g. collinear)."""


class BehindCameraError(MarsNavError, ValueError):
    """A landmark projects with non-positive depth."""


class NoProgressError(MarsNavError, RuntimeError):
    """Levenberg-Marquardt could not solve its normal equations.

    The best solution found so far is attached as ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ConfigError(MarsNavError, ValueError):
    """Invalid mission configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message
