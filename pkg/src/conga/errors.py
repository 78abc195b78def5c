"""Exception types shared across the package."""


class CongaError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(CongaError, ValueError):
    """An argument is malformed or a resource (e.g. path horizon) is too small."""


class DomainError(CongaError, ValueError):
    """An argument is outside the mathematical domain of the operation."""


class DegenerateSingularityError(CongaError):
    """A singular point whose derivative pair is linearly dependent (not a cusp)."""


class ValidationError(ParameterError):
    """A configuration file is missing keys or has invalid values."""
