"""Exception hierarchy shared by all modules."""


class EpbError(Exception):
    """Base class for errors raised by this package."""


class DomainError(EpbError, ValueError):
    """An argument lies outside the domain of the function."""


class ShapeError(EpbError, ValueError):
    """Input has the wrong length, shape, or is empty."""


class DataError(EpbError, ValueError):
    """Input data is malformed or cannot be used (e.g. non-finite likelihood row)."""


class ConfigurationError(EpbError, ValueError):
    """Inconsistent options, e.g. a requested method without its prior."""


class NumericError(EpbError, ArithmeticError):
    """A numerical routine failed to converge or underflowed."""
