"""Exception hierarchy for the generator package."""

from __future__ import annotations


class SdgError(Exception):
    """Base class for every error raised by this package."""


class IngestError(SdgError):
    """The CSV source is unusable as a whole (missing or wrong header)."""


class SessionRecordError(SdgError):
    """A single CSV row failed validation.

    Instances are raised under the strict policy and collected (not raised)
    under the skip policy.
    """

    REASONS = ("MalformedTimestamp", "NegativeDuration", "NonPositiveEnergy", "MissingField")

    def __init__(self, line_number: int, reason: str, detail: str = ""):
        if line_number < 1:
            raise ValueError("line_number must be >= 1")
        if reason not in self.REASONS:
            raise ValueError(f"unknown reason {reason!r}")
        self.line_number = line_number
        self.reason = reason
        self.detail = detail
        msg = f"line {line_number}: {reason}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)

    def __eq__(self, other):
        if not isinstance(other, SessionRecordError):
            return NotImplemented
        return (self.line_number, self.reason) == (other.line_number, other.reason)

    def __hash__(self):
        return hash((self.line_number, self.reason))


class ArrivalOutsideHorizon(SdgError, ValueError):
    pass


class EmptyTraining(SdgError, ValueError):
    pass


class OrderTooHigh(SdgError, ValueError):
    pass


class ZeroMean(SdgError, ValueError):
    pass


class NotOverdispersed(SdgError, ValueError):
    pass


class InsufficientData(SdgError, ValueError):
    pass


class DegenerateModel(SdgError, RuntimeError):
    pass


class NonPositiveData(SdgError, ValueError):
    pass


class EmptyInput(SdgError, ValueError):
    pass


class PersistError(SdgError):
    """Base for model-file problems."""


class SchemaVersionMismatch(PersistError):
    pass


class InvariantViolation(PersistError):
    pass


class ParseError(PersistError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
