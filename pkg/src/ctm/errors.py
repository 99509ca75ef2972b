"""Exception hierarchy shared by every ctm subsystem."""


class CtmError(Exception):
    """Base class for all ctm errors."""


class DimensionError(CtmError, ValueError):
    """Operand shapes are incompatible."""


class NumericError(CtmError, ArithmeticError):
    """A computation produced or received non-finite / degenerate values."""


class ConfigError(CtmError, ValueError):
    """Invalid hyperparameter or incompatible configuration."""


class ContractError(CtmError, ValueError):
    """A precondition of an operation was violated."""


class ParseError(CtmError, ValueError):
    """Dataset file could not be parsed."""

    def __init__(self, message, path=None, index=None):
        where = []
        if path is not None:
            where.append(str(path))
        if index is not None:
            where.append(f"question {index}")
        if where:
            message = f"{': '.join(where)}: {message}"
        super().__init__(message)
        self.path = path
        self.index = index


class FormatError(CtmError, ValueError):
    """Checkpoint bytes are malformed."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
