"""Exception hierarchy shared across the pipeline.

The CLI maps these onto process exit codes (config 2, data 3, numeric 4).
"""


class EvdecodeError(Exception):
    exit_code = 1


class ConfigError(EvdecodeError, ValueError):
    exit_code = 2


class DataError(EvdecodeError, ValueError):
    exit_code = 3


class ParseError(DataError):
    """Malformed input record; ``offset`` is a byte offset (binary) or line number (CSV)."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class DomainError(DataError):
    pass


class NumericError(EvdecodeError, ArithmeticError):
    exit_code = 4


class StateError(EvdecodeError, RuntimeError):
    exit_code = 1
