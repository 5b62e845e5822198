"""Exception hierarchy.

Every error raised on bad input derives from :class:`ValidationError`; the CLI
maps those to exit code 1 and everything else to exit code 2.
"""


class WorkloadError(Exception):
    """Base class for all package errors."""


class ValidationError(WorkloadError, ValueError):
    """Input violates a documented precondition or invariant."""


class MissingColumn(ValidationError):
    pass


class NonUniformGrid(ValidationError):
    pass


class NonFiniteValue(ValidationError):
    pass


class EmptySeries(ValidationError):
    pass


class ChannelLengthMismatch(ValidationError):
    pass


class InsufficientData(ValidationError):
    pass


class TooFewSamples(ValidationError):
    pass


class NoTrainingSubjects(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class ConstantInput(ValidationError):
    pass


class IncompleteMatrix(ValidationError):
    pass


class AllZeroDifferences(ValidationError):
    pass


class InsufficientColumns(ValidationError):
    pass


class IncompleteGrid(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class IoFailure(WorkloadError, OSError):
    """Reading or writing a persisted artifact failed."""
