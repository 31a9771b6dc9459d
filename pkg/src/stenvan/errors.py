"""Exception hierarchy shared by every module."""


class StenvanError(Exception):
    """Base class for all package errors."""


class DimensionError(StenvanError, ValueError):
    """Tensor shapes do not satisfy an operation's preconditions."""


class NumericError(StenvanError, ArithmeticError):
    """NaN or infinite values where finite ones are required."""


class ContractError(StenvanError, ValueError):
    """Arguments violate a documented contract (labels, caches, batches)."""


class ConfigError(StenvanError, ValueError):
    """Invalid model or run configuration."""
