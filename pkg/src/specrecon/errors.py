"""Exception hierarchy shared across the package.

CLI exit codes map onto these: ConfigError -> 2, DataError -> 3,
NumericError -> 4.
"""


class ShapeError(ValueError):
    """Operand shapes are incompatible for an operation."""


class ContractError(ValueError):
    """A precondition on an operation's arguments was violated."""


class ConfigError(ValueError):
    """Invalid configuration key or value."""


class DataError(ValueError):
    """Problem with on-disk data."""


class BadMagicError(DataError):
    """File does not start with the expected magic bytes."""


class TruncatedFileError(DataError):
    """File ended before the header-declared payload."""


class DimensionOverflowError(DataError):
    """Header declares dimensions that are zero or implausibly large."""


class NumericError(RuntimeError):
    """Non-finite values encountered during computation."""
