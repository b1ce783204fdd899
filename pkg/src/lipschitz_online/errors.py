"""Exception types raised across the package."""


class LipschitzOnlineError(Exception):
    """Base class for all package errors."""


class ValidationError(LipschitzOnlineError, ValueError):
    """Invalid input or configuration."""


class NumericError(LipschitzOnlineError, ArithmeticError):
    """A numerical routine failed to reach its tolerance."""


class RowSumError(ValidationError):
    def __init__(self, row, total):
        self.row = row
        self.total = total
        super().__init__(f"kernel row {row} sums to {total!r}, expected 1")


class NotErgodic(ValidationError):
    pass


class NoConvergence(NumericError):
    pass


class Unsupported(ValidationError):
    pass


class UnknownContext(ValidationError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown context"


class ContextExplosion(ValidationError):
    pass


class TooShort(ValidationError):
    pass


class Oversized(ValidationError):
    pass


class DegeneratePair(ValidationError):
    pass


class PredictionOutOfRange(ValidationError):
    pass


class ConfigError(ValidationError):
    """Configuration parse or validation failure, with line/field diagnostics."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
