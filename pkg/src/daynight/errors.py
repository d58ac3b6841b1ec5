"""
Exception hierarchy.

Every error raised on purpose by the package derives from `DayNightError`
and carries the process exit code the command line reports for it.
"""


class DayNightError(Exception):
    exit_code: int = 2


class UsageError(DayNightError):
    """Invalid command-line usage or configuration value."""

    exit_code = 1


class DataFormatError(DayNightError):
    """Malformed data, checkpoints or inputs."""

    exit_code = 2


class ShapeError(DataFormatError, ValueError):
    pass


class NonFiniteError(DataFormatError, ValueError):
    pass


class DomainError(DataFormatError, ValueError):
    pass


class CheckpointFormatError(DataFormatError):
    pass


class EmptyDataError(DataFormatError):
    pass


class InvariantViolation(DayNightError):
    """A property the implementation guarantees was observed to fail."""

    exit_code = 3
