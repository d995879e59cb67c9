"""Exception types shared by the simulation, detection and IO layers."""

from __future__ import annotations


class CriticalityError(Exception):
    """Base class for every error raised by the toolkit."""


class ValidationError(CriticalityError, ValueError):
    """An operation received inputs outside its preconditions."""


class TraceFormatError(ValidationError):
    """A trace CSV row is malformed or holds an out-of-range value."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyAlignmentError(CriticalityError):
    """No run in an ensemble reached criticality."""


class ConfigError(CriticalityError):
    """The configuration file is missing, malformed or violates an invariant."""
