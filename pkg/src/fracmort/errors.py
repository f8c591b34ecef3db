"""Exception hierarchy shared by all modules."""


class FracmortError(Exception):
    """Base class for every error raised by the package."""


class InsufficientDataError(FracmortError, ValueError):
    """Too few usable observations to produce an estimate."""


class InsufficientVariationError(FracmortError, ValueError):
    """The input carries no variation (e.g. a quadratic variation of zero)."""


class NumericalDegeneracyError(FracmortError, ArithmeticError):
    """A factorization or objective evaluation broke down numerically."""


class FilterInconsistencyError(FracmortError, ValueError):
    """A filter produced a nonpositive radicand in the scale estimator."""


class DataFormatError(FracmortError, ValueError):
    """Input text could not be parsed into a mortality table."""


class GapError(FracmortError, LookupError):
    """A requested window contains missing observations."""

    def __init__(self, message, missing_years=()):
        super().__init__(message)
        self.missing_years = tuple(missing_years)


class NotFoundError(FracmortError, LookupError):
    """A requested age, sex or year is absent from a table."""
