"""Exception hierarchy shared across the package."""


class GipError(Exception):
    """Base class for all package errors."""


class ShapeError(GipError, ValueError):
    """Operands have incompatible shapes."""


class NonFiniteError(GipError, ArithmeticError):
    """A forward computation produced NaN or Inf."""


class DataError(GipError, ValueError):
    """Malformed or missing dataset input."""


class ConfigError(GipError, ValueError):
    """Unknown or invalid configuration key/value."""


class ZeroSelfKernelError(GipError, ArithmeticError):
    """A graph has zero self-similarity, so normalization is undefined."""


class DivergenceError(GipError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class SingleClusterError(GipError, ValueError):
    """Silhouette requested but every sample fell in one cluster."""
