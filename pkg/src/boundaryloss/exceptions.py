"""Exception types raised across the package."""


class BoundaryLossError(Exception):
    """Base class for all package errors."""


class InvalidThreshold(BoundaryLossError, ValueError):
    pass


class FormatError(BoundaryLossError, ValueError):
    """Malformed grid or checkpoint file."""


class ShapeError(BoundaryLossError, ValueError):
    pass


class EmptyFeatureSet(BoundaryLossError, ValueError):
    """Distance transform requested on a mask without any feature pixel."""


class NoIntersection(BoundaryLossError, RuntimeError):
    """Too many rays left the domain without crossing the second boundary."""


class InvalidSchedule(BoundaryLossError, ValueError):
    pass


class CacheError(BoundaryLossError, RuntimeError):
    """Backward pass called with a cache that does not match the weights."""


class NonFiniteGradient(BoundaryLossError, FloatingPointError):
    pass


class ConfigError(BoundaryLossError, ValueError):
    pass
