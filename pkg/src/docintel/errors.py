"""Error vocabulary shared across the engine.

Every error the HTTP service can surface maps to a machine-readable code
derived from the class name (``DuplicateChunk`` -> ``"duplicate_chunk"``).
"""

from __future__ import annotations

import re


def _snake(name: str) -> str:
    return re.sub(r"(?<=[a-z0-9])(?=[A-Z])", "_", name).lower()


class DocIntelError(Exception):
    """Base class for all engine errors."""

    @property
    def code(self) -> str:
        return _snake(type(self).__name__)


# --- ingest ---------------------------------------------------------------

class UnsupportedFormat(DocIntelError):
    pass


class IoError(DocIntelError):
    pass


# --- stores (shared) ------------------------------------------------------

class StoreClosed(DocIntelError):
    pass


class StoreEmpty(DocIntelError):
    pass


class DuplicateChunk(DocIntelError):
    pass


class UnknownChunk(DocIntelError):
    pass


class CorruptStore(DocIntelError):
    """Persisted store file failed validation.

    ``offset`` is the byte position at which the problem was detected,
    when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class PartialWriteRollback(DocIntelError):
    pass


class IngestInProgress(DocIntelError):
    pass


# --- query language -------------------------------------------------------

class ParseError(DocIntelError):
    """Query text could not be parsed; ``position`` is a 0-based character index."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class EmptyQuery(DocIntelError):
    pass


class PureNegationQuery(DocIntelError):
    pass


# --- dense index ----------------------------------------------------------

class ZeroVector(DocIntelError):
    pass


class DuplicateId(DocIntelError):
    pass


class EmptyIndex(DocIntelError):
    pass


class DimensionMismatch(DocIntelError):
    pass


# --- llm backends ---------------------------------------------------------

class NetworkError(DocIntelError):
    pass


class HttpStatusError(DocIntelError):
    def __init__(self, status: int, body_excerpt: str = ""):
        super().__init__(f"HTTP {status}: {body_excerpt[:200]}")
        self.status = status
        self.body_excerpt = body_excerpt[:200]


class BackendUnavailable(DocIntelError):
    pass


class MissingVar(DocIntelError):
    def __init__(self, name: str):
        super().__init__(f"missing template variable: {name}")
        self.name = name


class UnknownVar(DocIntelError):
    def __init__(self, name: str):
        super().__init__(f"unknown template variable: {name}")
        self.name = name


class StructuredFailure(DocIntelError):
    """Structured completion still failed validation after all retries."""

    def __init__(self, raw: str, violations: list):
        details = "; ".join(str(v) for v in violations)
        super().__init__(f"structured output failed validation: {details}")
        self.raw = raw
        self.violations = violations


# --- pipelines ------------------------------------------------------------

class EmptyQuestion(DocIntelError):
    pass


class SingleClass(DocIntelError):
    pass


class EmptyExamples(DocIntelError):
    pass


# --- config / service -----------------------------------------------------

class ConfigParseError(DocIntelError):
    def __init__(self, message: str, line: int):
        super().__init__(f"{message} (line {line})")
        self.line = line


class UnknownKey(DocIntelError):
    def __init__(self, key: str, line: int | None = None):
        msg = f"unknown config key: {key}"
        if line is not None:
            msg += f" (line {line})"
        super().__init__(msg)
        self.key = key
        self.line = line


class InvalidValue(DocIntelError):
    def __init__(self, key: str, message: str = ""):
        super().__init__(f"invalid value for {key}" + (f": {message}" if message else ""))
        self.key = key


class UnknownModel(DocIntelError):
    pass


class UnknownSource(DocIntelError):
    pass
