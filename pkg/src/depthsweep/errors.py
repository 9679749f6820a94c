"""Exception types shared across the package, mapped to CLI exit codes."""


class ConfigError(ValueError):
    """Bad configuration or command usage (CLI exit code 1)."""


class DataError(ValueError):
    """Malformed or missing input data (CLI exit code 2)."""


class NumericalError(ArithmeticError):
    """Non-finite values or divergence during computation (CLI exit code 3)."""


class FileFormatError(DataError):
    """Malformed binary/text file; carries the byte offset of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset
