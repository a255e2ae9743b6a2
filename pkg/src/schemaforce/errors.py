"""Exception types shared across the package."""

from __future__ import annotations


class SchemaforceError(Exception):
    """Base class for every error raised by this package."""


# schema documents


class MalformedJsonError(SchemaforceError):
    """Input text is not well-formed JSON."""


class UnsupportedKeywordError(SchemaforceError):
    """Schema document uses a keyword outside the supported subset."""


class UnknownTypeError(SchemaforceError):
    """Schema document declares a type other than object/string/integer."""


class InvalidSchemaError(SchemaforceError):
    """A schema value violates a structural invariant."""


class InvalidKeyError(SchemaforceError):
    """Entity key contains characters outside [A-Za-z0-9_]."""


class TooManyPropertiesError(SchemaforceError):
    """Index prefixes are single digits; more than 9 top-level properties."""


class UnsupportedSchemaError(SchemaforceError):
    """Schema node the pattern compiler does not understand (defensive)."""


class RegexSyntaxError(SchemaforceError):
    """Rendered pattern text could not be parsed back."""


# automata


class StateBudgetExceededError(SchemaforceError):
    """Subset construction exceeded the configured state cap."""


class DeadStateError(SchemaforceError):
    """Operation requires a live automaton state."""


class TokenNotAllowedError(SchemaforceError):
    """Token id is not allowed from the given state."""


# decoding


class EmptyMaskError(SchemaforceError):
    """No token is allowed by the mask."""


class VocabularyCannotExpressSchemaError(SchemaforceError):
    """Decoding reached a state from which the vocabulary offers no way forward."""


class MaxTokensExceededError(SchemaforceError):
    """Token budget exhausted before generation reached accept + eos.

    ``partial_text`` is diagnostic only and must never be treated as a valid
    result.
    """

    def __init__(self, message: str, partial_text: str = "", steps: int = 0):
        super().__init__(message)
        self.partial_text = partial_text
        self.steps = steps


# remote backend


class RemoteTimeoutError(SchemaforceError):
    """Remote generation endpoint did not answer within the deadline."""


class RemoteHttpError(SchemaforceError):
    """Remote endpoint answered with an HTTP error status."""

    def __init__(self, status: int, body: str = ""):
        super().__init__(f"remote endpoint returned HTTP {status}")
        self.status = status
        self.body = body


class RemoteProtocolError(SchemaforceError):
    """Remote response (or transport) is not in the expected shape."""


# harness


class DatasetParseError(SchemaforceError):
    """A dataset line is not valid JSON."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class SchemaFieldMissingError(SchemaforceError):
    """A dataset record is missing or has an unusable required field."""

    def __init__(self, line_no: int, field: str):
        super().__init__(f"line {line_no}: missing or invalid field {field!r}")
        self.line_no = line_no
        self.field = field


class MissingKeyError(SchemaforceError):
    """Record requires an entity key but none is present."""


class IdMismatchError(SchemaforceError):
    """Predictions and records do not align by id."""


class PipelineStageError(SchemaforceError):
    """Failure in one pipeline stage, tagged with the offending record id."""

    def __init__(self, stage: str, record_id: str, cause: Exception):
        super().__init__(f"[{stage}] record {record_id!r}: {cause}")
        self.stage = stage
        self.record_id = record_id
        self.cause = cause
