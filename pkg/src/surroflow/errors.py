"""Exception types shared across the package."""


class SurroflowError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(SurroflowError, ValueError):
    """An argument violates its documented precondition."""


class ParseError(SurroflowError, ValueError):
    """A file could not be parsed; the message names the offending record."""


class ValidationError(SurroflowError, ValueError):
    """Structured data violates a domain invariant."""


class DataError(SurroflowError, ValueError):
    """Inputs are individually valid but mutually inconsistent."""


class ShapeError(SurroflowError, ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class AssignmentError(SurroflowError, RuntimeError):
    """Traffic assignment failed, e.g. an unreachable origin-destination pair."""


class NonFiniteError(SurroflowError, ArithmeticError):
    """A numeric operation produced NaN or Inf."""


class TrainingError(SurroflowError, RuntimeError):
    """Model training diverged or could not proceed."""


class UsageError(SurroflowError, RuntimeError):
    """An API was called in an unsupported way."""


class MetricError(SurroflowError, ValueError):
    """A requested metric is undefined for the given data."""
