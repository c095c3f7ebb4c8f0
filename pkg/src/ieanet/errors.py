"""Exception types raised by the library.

Every error the library raises on purpose derives from IeaError, so callers
(the CLI in particular) can separate expected failures from genuine bugs.
"""


class IeaError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(IeaError):
    """Operand shapes are incompatible; the message names both shapes."""


class ConfigError(IeaError):
    """A configuration value is invalid (bad m, non-integral output size, ...)."""


class UsageError(IeaError):
    """API misuse, e.g. calling backward before forward cached its inputs."""


class DataFormatError(IeaError):
    """A data file does not conform to its declared format."""


class CheckpointError(IeaError):
    """A checkpoint file is unreadable, truncated, or version-incompatible."""


class TrainingDivergedError(IeaError):
    """Training produced a non-finite loss or gradient."""
