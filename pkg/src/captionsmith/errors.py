"""Exception hierarchy shared across the package."""

from __future__ import annotations


class CaptionSmithError(Exception):
    """Base class for every error raised by this package."""


# --- constraint block parsing ------------------------------------------------


class MissingBlock(CaptionSmithError):
    """The text contains no fenced constraint block."""


class MalformedBlock(CaptionSmithError):
    """A constraint block violates the block grammar."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class DuplicateKey(MalformedBlock):
    """The same constraint key appears twice in one block."""


# --- action DSL ---------------------------------------------------------------


class ParseError(CaptionSmithError):
    """An action string violates the action grammar.

    ``position`` is a 0-based character offset into the input; ``expected``
    names the token classes that would have been accepted there.
    """

    def __init__(self, message: str, position: int, expected: tuple[str, ...] = ()):
        detail = f"{message} at offset {position}"
        if expected:
            detail += " (expected " + " | ".join(expected) + ")"
        super().__init__(detail)
        self.position = position
        self.expected = expected


class UnknownForm(ParseError):
    """The action is neither a ``call`` nor a ``finish``."""


# --- backends -----------------------------------------------------------------


class BackendError(CaptionSmithError):
    """A model backend call failed (transport, quota, malformed response)."""

    def __init__(self, message: str, retriable: bool = False):
        super().__init__(message)
        self.retriable = retriable


class MalformedBackendOutput(BackendError):
    """A backend answered, but not in the agreed output contract."""


class CassetteMismatch(BackendError):
    """A replayed request does not match the next recorded request."""


class DimensionDrift(BackendError):
    """An embedding response's length differs from the advertised dimension."""


class SchemaError(CaptionSmithError):
    """A fixture or config record is missing or mistypes a field."""


class ClientError(CaptionSmithError):
    """A web-search client failed (network, quota)."""


# --- vectors ------------------------------------------------------------------


class DimensionMismatch(CaptionSmithError):
    """Two vectors (or a vector and a store) disagree on dimension."""


class ZeroVector(CaptionSmithError):
    """Cosine similarity is undefined for an all-zero vector."""


# --- pipeline -----------------------------------------------------------------


class EvolveFailed(CaptionSmithError):
    """The evolver backend never produced a well-formed constraint block."""

    def __init__(self, message: str, raw_text: str):
        super().__init__(message)
        self.raw_text = raw_text


class UnknownTool(CaptionSmithError):
    """An action names a tool that is not registered."""


class ArgumentMismatch(CaptionSmithError):
    """An action's arguments do not satisfy the tool's declared signature."""
