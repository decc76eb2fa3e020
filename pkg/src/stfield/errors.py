"""Exception types shared across the package."""


class StfieldError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(StfieldError, ValueError):
    """Invalid parameter combination (bad fractions, out-of-range sizes, ...)."""


class PreconditionError(StfieldError, ValueError):
    """An operation was called on data that violates its preconditions."""


class ShapeError(StfieldError, ValueError):
    """Array dimensions do not match the operation contract."""


class NumericError(StfieldError, ValueError):
    """Non-finite values where finite numbers are required."""


class CapabilityError(StfieldError, RuntimeError):
    """The requested method cannot handle the problem size."""


class ParseError(StfieldError, ValueError):
    """Malformed input file; the message names file and line."""


class DuplicateKeyError(StfieldError, ValueError):
    """A key that must be unique appeared twice."""


class ReferentialError(StfieldError, ValueError):
    """A record references an entity that does not exist."""


class ImputationError(StfieldError, ValueError):
    """A missing cell has no observed neighbours to average."""


class TrainingError(StfieldError, RuntimeError):
    """Optimization diverged; the message reports epoch and learning rate."""


class DiagnosticError(StfieldError, RuntimeError):
    """A summary statistic cannot be computed (e.g. empty variogram)."""
