"""Shared exception types."""


class DimensionError(ValueError):
    """Shapes or sizes inconsistent with what an operation requires."""


class DataError(IOError):
    """Missing or truncated input data."""


class FormatError(ValueError):
    """A container or config that does not follow its declared format."""


class CorruptionError(ValueError):
    """A payload inconsistent with its header or model parameters."""


class CodingError(ValueError):
    """Entropy coder misuse: out-of-support symbol or truncated stream."""


class NumericError(ArithmeticError):
    """NaN/Inf where finite values are required."""
