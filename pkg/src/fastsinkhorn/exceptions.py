"""Exception hierarchy shared by every module of the package."""


class FastSinkhornError(Exception):
    """Base class for all package errors."""


class ValidationError(FastSinkhornError, ValueError):
    pass


class NegativeWeightError(ValidationError):
    pass


class MassNotOneError(ValidationError):
    pass


class LengthMismatchError(ValidationError):
    pass


class GridMismatchError(ValidationError):
    pass


class NonPositiveInputError(ValidationError):
    pass


class NonPositiveEpsilonError(ValidationError):
    pass


class NonFiniteInputError(ValidationError):
    pass


class MassMismatchError(ValidationError):
    pass


class ZeroSignalError(ValidationError):
    pass


class DegenerateInputError(ValidationError):
    pass


class NonFiniteResultError(FastSinkhornError, ArithmeticError):
    """A quotient or exponential overflowed, or produced NaN."""


class TooLargeError(FastSinkhornError, MemoryError):
    """The request exceeds a quadratic-cost safety cap."""


class IndexOutOfRangeError(FastSinkhornError, IndexError):
    pass


class ParseError(FastSinkhornError, ValueError):
    pass


class UnsupportedFormatError(FastSinkhornError, ValueError):
    pass
