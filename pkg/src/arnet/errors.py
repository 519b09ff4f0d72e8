"""Exception and warning types shared across the library."""


class ArnetError(Exception):
    """Base class for all library errors."""


class ShapeError(ArnetError, ValueError):
    """Operands have incompatible or malformed shapes."""


class ConfigError(ArnetError, ValueError):
    """Invalid hyperparameter, option, or config-file entry."""


class DataError(ArnetError, ValueError):
    """Labels, splits, or dataset contents violate their contract."""


class NumericError(ArnetError, ArithmeticError):
    """Non-finite values or violated numeric preconditions."""


class ParseError(ArnetError, ValueError):
    """Malformed file content; carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ChecksumError(ArnetError):
    """Checkpoint bytes do not match their recorded digest."""


class VersionError(ArnetError):
    """Checkpoint format version is not supported by this build."""


class DegenerateRowWarning(RuntimeWarning):
    """A row with near-zero norm was left as-is or reseeded."""
