"""Exception types shared across the toolkit."""

from __future__ import annotations


class FsmflowError(Exception):
    """Base class for all toolkit errors."""


class EmptyDocument(FsmflowError):
    """Raised when an input document contains no text."""


class NoSectionsFound(FsmflowError):
    """Raised when a document yields zero numbered section headings."""


class AuthMissing(FsmflowError):
    """Raised when the live backend has no usable credential."""


class RateLimited(FsmflowError):
    """Raised when the live backend's retry budget is exhausted."""


class MalformedResponse(FsmflowError):
    """Raised when a completion response is not JSON or lacks content."""


class ReplayMiss(FsmflowError):
    """Raised when a request fingerprint is absent from the replay store.

    Usually a sign that prompts drifted since the store was recorded.
    """

    def __init__(self, fingerprint: str):
        super().__init__(f"no recorded response for fingerprint {fingerprint}")
        self.fingerprint = fingerprint


class UnparseableStageOutput(FsmflowError):
    """Raised when a stage response stays unparseable after one re-ask."""

    def __init__(self, stage: int, chunk_ordinal: int, detail: str = ""):
        msg = f"stage {stage} output unparseable for chunk {chunk_ordinal}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.stage = stage
        self.chunk_ordinal = chunk_ordinal


class SchemaViolation(FsmflowError):
    """Raised when serialized data does not match its schema.

    `path` points at the offending location in JSONPath-like notation,
    e.g. ``$.rules[0].command``.
    """

    def __init__(self, path: str, detail: str):
        super().__init__(f"{path}: {detail}")
        self.path = path
        self.detail = detail


class DanglingState(FsmflowError):
    """Raised when an FSM references a state that is not declared."""


class ModeUnsupported(FsmflowError):
    """Raised for an unknown evaluation mode."""


class ConfigError(FsmflowError):
    """Raised for invalid or incomplete run configuration."""
