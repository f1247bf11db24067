"""Exception types shared across the package."""


class MuseqError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(MuseqError):
    """A configuration file or object violates an invariant.

    ``field`` names the offending field so callers can point at it.
    """

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if field is not None:
            prefix += f"{field}: "
        super().__init__(prefix + message)


class ParseError(MuseqError):
    """A file could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyInputError(MuseqError):
    """An operation that requires data was given none."""


class EmptyClassError(MuseqError):
    """A slot class contains no fitted samples."""


class UnpartitionedSlotError(MuseqError):
    """A slot index is not covered by the configured slot classes."""


class OutOfOrderEventError(MuseqError):
    """An event arrived with a timestamp older than the last ingested one."""


class DoubleTickError(MuseqError):
    """The control loop was ticked twice for the same slot boundary."""


class InstanceTooLargeError(MuseqError):
    """A brute-force oracle was asked to enumerate an unguarded instance."""


class ShapeMismatchError(MuseqError):
    """Problem and plan shapes are inconsistent."""


class SolverError(MuseqError):
    """The allocation solver failed to converge; indicates a bug or
    numerically hostile instance."""
