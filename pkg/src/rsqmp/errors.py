"""Exception hierarchy shared by all modules."""


class RsqmpError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(RsqmpError, ValueError):
    """Input failed a structural or range check."""


class NumericFailure(RsqmpError, ArithmeticError):
    """A computation could not meet its accuracy contract."""


class NotHermitian(ValidationError):
    pass


class NonFinite(ValidationError):
    pass


class AlphaTooSmall(ValidationError):
    pass


class NotSubnormalized(ValidationError):
    pass


class NuTooLarge(ValidationError):
    pass


class AllZeroCoefficients(ValidationError):
    pass


class DivisionByZeroCoefficient(NumericFailure):
    pass


class NumericalUnderflow(NumericFailure):
    pass


class InvalidDensityMatrix(ValidationError):
    pass


class CannotSubnormalize(ValidationError):
    pass


class EpsilonExhausted(ValidationError):
    pass


class PlanMismatch(ValidationError):
    pass


class EmptyStream(ValidationError):
    pass


class NotErgodic(NumericFailure):
    pass


class GapTooSmall(NumericFailure):
    pass


class OverlapTooSmall(NumericFailure):
    pass


class SpectrumInGap(ValidationError):
    pass


class OverlapViolated(ValidationError):
    pass


class SearchInconsistent(NumericFailure):
    pass


class ConfigInvalid(ValidationError):
    pass


class ParseError(ConfigInvalid):
    """Config text could not be parsed or failed a field check.

    Attributes:
        field: Dotted path of the offending field, if known.
        line: One-based line number in the source text, if known.
    """

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
