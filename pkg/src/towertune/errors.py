"""Exception types shared across the package.

Every error raised on a user-facing path is a subclass of TowertuneError so
callers (and the CLI) can map failures to exit codes without matching on
message strings.
"""


class TowertuneError(Exception):
    """Base class for all package errors."""


class ConfigurationError(TowertuneError, ValueError):
    """A field or combination of fields is invalid for the requested operation."""


class DataFormatError(TowertuneError):
    """A serialized payload could not be parsed.

    Carries the byte offset at which parsing failed when that is known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class SchemaError(TowertuneError):
    """A payload parsed but its declared structure is inconsistent."""


class NumericError(TowertuneError):
    """A computation left the representable range (overflow guard, NaN, ...)."""


class EstimatorStateError(TowertuneError):
    """Moving-average estimator state is unusable (negative, stale, wrong size)."""


class TrainingError(TowertuneError):
    """Training diverged. Carries the step index at which it was detected."""

    def __init__(self, message, step=None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step


class NormalizationError(NumericError):
    """An embedding row had zero (or non-finite) norm before unit-normalization."""


class CheckpointError(TowertuneError):
    """A checkpoint failed version, checksum, or compatibility validation."""
