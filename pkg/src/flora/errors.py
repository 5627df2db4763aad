"""Exception types shared across the package."""


class FloraError(Exception):
    """Base class for all errors raised by flora."""


class ShapeError(FloraError, ValueError):
    """Operand shapes do not conform."""


class DataError(FloraError, ValueError):
    """Input contains non-finite values or otherwise invalid data."""


class StateError(FloraError, RuntimeError):
    """Operation is not valid in the object's current state."""


class ConfigError(FloraError, ValueError):
    """Invalid hyperparameter or configuration."""


class RegimeError(FloraError, ValueError):
    """A bound was requested outside the regime where it is defined."""


class FormatError(FloraError, ValueError):
    """A data file does not follow the expected binary layout."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class CompressionWarning(UserWarning):
    """Projection rank gives no memory benefit over the uncompressed buffer."""
