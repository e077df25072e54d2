"""Completion backends behind one interface, plus prompt templating and
schema-validated structured output.

Two backends ship: a deterministic in-process stub (echo or scripted
canned replies, with a call log tests can inspect) and an HTTP client
speaking the de-facto chat-completions wire shape that local inference
servers and compliant cloud endpoints share. Nothing here reaches the
network unless an endpoint was configured explicitly.

The remote embedder lives here too so all HTTP plumbing (retries, auth
header, error mapping) stays in one file.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field

import numpy as np
import requests

from .errors import (
    BackendUnavailable,
    DimensionMismatch,
    HttpStatusError,
    MissingVar,
    NetworkError,
    StructuredFailure,
    UnknownVar,
)

MAX_STOP_SEQUENCES = 4
DEFAULT_MAX_IN_FLIGHT = 4

RETRY_MAX_ATTEMPTS = 3
RETRY_BACKOFF_BASE = 0.5
RETRY_BACKOFF_FACTOR = 2.0

EMBED_BATCH_LIMIT = 128

SCHEMA_TYPES = ("string", "integer", "number", "boolean", "string_list")

_SNAKE_NAME = re.compile(r"^[a-z][a-z0-9_]*$")


# --- request / response types ---------------------------------------------

@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    max_tokens: int = 512
    temperature: float = 0.0
    stop: tuple[str, ...] = ()
    backend_hint: str | None = None

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if len(self.stop) > MAX_STOP_SEQUENCES:
            raise ValueError(f"at most {MAX_STOP_SEQUENCES} stop sequences")


@dataclass(frozen=True)
class Completion:
    text: str
    finish_reason: str            # stop | length | error
    usage: tuple[int, int]        # (prompt_units, output_units)
    backend_id: str
    error_detail: str | None = None


# --- prompt templates ------------------------------------------------------

@dataclass(frozen=True)
class PromptTemplate:
    template: str
    required_vars: frozenset[str]

    @classmethod
    def from_text(cls, template: str) -> "PromptTemplate":
        return cls(template, frozenset(_placeholders(template)))


def _placeholders(template: str) -> set[str]:
    names: set[str] = set()
    i, n = 0, len(template)
    while i < n:
        c = template[i]
        if c == "{":
            if i + 1 < n and template[i + 1] == "{":
                i += 2
                continue
            j = template.find("}", i + 1)
            if j < 0:
                raise ValueError("unbalanced { in template")
            names.add(template[i + 1:j])
            i = j + 1
        elif c == "}":
            if i + 1 < n and template[i + 1] == "}":
                i += 2
                continue
            raise ValueError("unbalanced } in template")
        else:
            i += 1
    return names


def render_prompt(t: PromptTemplate, vars: dict[str, str]) -> str:
    """Fill {name} slots. Vars must cover required_vars exactly; {{ and }}
    are literal braces."""
    for name in sorted(t.required_vars - set(vars)):
        raise MissingVar(name)
    for name in sorted(set(vars) - t.required_vars):
        raise UnknownVar(name)
    out: list[str] = []
    i, n = 0, len(t.template)
    while i < n:
        c = t.template[i]
        if c == "{":
            if i + 1 < n and t.template[i + 1] == "{":
                out.append("{")
                i += 2
                continue
            j = t.template.find("}", i + 1)
            name = t.template[i + 1:j]
            if name not in vars:
                raise MissingVar(name)
            out.append(vars[name])
            i = j + 1
        elif c == "}" and i + 1 < n and t.template[i + 1] == "}":
            out.append("}")
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def escape_braces(value: str) -> str:
    """Make a value safe to substitute into a template before rendering."""
    return value.replace("{", "{{").replace("}", "}}")


def bind_vars(t: PromptTemplate, vars: dict[str, str]) -> PromptTemplate:
    """Fill a subset of a template's slots, returning a smaller template.

    Substituted values are brace-escaped so they stay literal through the
    eventual render.
    """
    for name in sorted(set(vars) - t.required_vars):
        raise UnknownVar(name)
    out: list[str] = []
    i, n = 0, len(t.template)
    while i < n:
        c = t.template[i]
        if c == "{":
            if i + 1 < n and t.template[i + 1] == "{":
                out.append("{{")
                i += 2
                continue
            j = t.template.find("}", i + 1)
            name = t.template[i + 1:j]
            out.append(escape_braces(vars[name]) if name in vars
                       else "{" + name + "}")
            i = j + 1
        elif c == "}" and i + 1 < n and t.template[i + 1] == "}":
            out.append("}}")
            i += 2
        else:
            out.append(c)
            i += 1
    return PromptTemplate.from_text("".join(out))


# --- extraction schema -----------------------------------------------------

@dataclass(frozen=True)
class SchemaField:
    name: str
    type: str
    required: bool = True
    description: str = ""

    def __post_init__(self):
        if self.type not in SCHEMA_TYPES:
            raise ValueError(f"unknown field type: {self.type}")
        if not _SNAKE_NAME.match(self.name):
            raise ValueError(f"field name must be snake_case: {self.name!r}")


@dataclass(frozen=True)
class ExtractionSchema:
    fields: tuple[SchemaField, ...]

    def __post_init__(self):
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise ValueError("field names must be unique")
        if not names:
            raise ValueError("schema needs at least one field")

    def field_names(self) -> list[str]:
        return [f.name for f in self.fields]


@dataclass(frozen=True)
class Violation:
    kind: str                 # missing | wrong_type | no_json
    field: str | None
    message: str

    def __str__(self) -> str:
        return self.message

    def to_dict(self) -> dict:
        return {"kind": self.kind, "field": self.field,
                "message": self.message}


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    record: dict | None
    violations: tuple[Violation, ...]
    warnings: tuple[str, ...]


# --- backends --------------------------------------------------------------

class StubBackend:
    """Deterministic scriptable backend for offline runs and tests.

    echo_prompt mode returns "STUB:" + prompt; canned mode serves the
    scripted responses round-robin. Every complete() call is appended to
    call_log under a lock, so counts are exact across threads.
    """

    backend_id = "stub"

    def __init__(self, mode: str = "echo_prompt",
                 canned: list[str] | None = None,
                 max_in_flight: int = DEFAULT_MAX_IN_FLIGHT):
        if mode not in ("echo_prompt", "canned"):
            raise ValueError(f"unknown stub mode: {mode}")
        if mode == "canned" and not canned:
            raise ValueError("canned mode needs at least one response")
        self.mode = mode
        self.canned = list(canned or [])
        self.call_log: list[CompletionRequest] = []
        self._lock = threading.Lock()
        self._served = 0
        self._gate = threading.BoundedSemaphore(max_in_flight)

    def complete(self, req: CompletionRequest) -> Completion:
        with self._gate:
            with self._lock:
                self.call_log.append(req)
                if self.mode == "echo_prompt":
                    text = "STUB:" + req.prompt
                else:
                    text = self.canned[self._served % len(self.canned)]
                    self._served += 1
            return Completion(
                text=text,
                finish_reason="stop",
                usage=(len(req.prompt.split()), len(text.split())),
                backend_id=self.backend_id,
            )

    def reset(self) -> None:
        with self._lock:
            self.call_log.clear()
            self._served = 0


def _auth_headers(api_key_env: str | None) -> dict[str, str]:
    if not api_key_env:
        return {}
    key = os.environ.get(api_key_env)
    if key is None:
        raise BackendUnavailable(f"env var {api_key_env} is not set")
    return {"Authorization": f"Bearer {key}"}


def _post_json(url: str, payload: dict, headers: dict[str, str],
               timeout: float, session, sleep) -> dict:
    """POST with retries on 429/5xx only: 3 attempts, backoff 0.5s x2."""
    post = session.post if session is not None else requests.post
    last_status: HttpStatusError | None = None
    for attempt in range(RETRY_MAX_ATTEMPTS):
        if attempt > 0:
            sleep(RETRY_BACKOFF_BASE * RETRY_BACKOFF_FACTOR ** (attempt - 1))
        try:
            resp = post(url, json=payload, headers=headers, timeout=timeout)
        except requests.RequestException as e:
            raise NetworkError(f"request to {url} failed: {e}") from e
        if resp.status_code == 429 or resp.status_code >= 500:
            last_status = HttpStatusError(resp.status_code, resp.text)
            continue
        if resp.status_code >= 400:
            raise HttpStatusError(resp.status_code, resp.text)
        try:
            return resp.json()
        except ValueError as e:
            raise NetworkError(f"non-JSON response from {url}: {e}") from e
    raise last_status


class HttpBackend:
    """Chat-completions-compatible HTTP client.

    Request:  POST <endpoint>
              {"model", "messages":[{"role":"user","content":prompt}],
               "max_tokens", "temperature", "stop"?}
    Response: {"choices":[{"message":{"content"},"finish_reason"}],
               "usage":{"prompt_tokens","completion_tokens"}}

    Retries 429 and 5xx with exponential backoff (0.5s base, factor 2,
    3 attempts total); other failures surface immediately.
    """

    def __init__(self, endpoint: str, model: str = "",
                 api_key_env: str | None = None, timeout: float = 60.0,
                 max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
                 session=None, sleep=time.sleep):
        if not endpoint:
            raise BackendUnavailable("http backend requires an endpoint")
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.session = session
        self.sleep = sleep
        self.backend_id = f"http:{model}" if model else "http"
        self._gate = threading.BoundedSemaphore(max_in_flight)

    def complete(self, req: CompletionRequest) -> Completion:
        payload: dict = {
            "model": self.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
        }
        if req.stop:
            payload["stop"] = list(req.stop)
        headers = _auth_headers(self.api_key_env)
        with self._gate:
            body = _post_json(self.endpoint, payload, headers,
                              self.timeout, self.session, self.sleep)
        try:
            choice = body["choices"][0]
            text = choice["message"]["content"]
        except (KeyError, IndexError, TypeError):
            return Completion(
                text="", finish_reason="error", usage=(0, 0),
                backend_id=self.backend_id,
                error_detail=f"malformed response body: {json.dumps(body)[:200]}",
            )
        reason = choice.get("finish_reason")
        if reason not in ("stop", "length"):
            reason = "stop" if text else "error"
        usage = body.get("usage") or {}
        return Completion(
            text=text,
            finish_reason=reason,
            usage=(int(usage.get("prompt_tokens", 0)),
                   int(usage.get("completion_tokens", 0))),
            backend_id=self.backend_id,
        )


class RemoteEmbedder:
    """Batch embeddings over the standard {model, input} wire shape.

    Vectors are re-normalized locally; a response whose dimension differs
    from the configured store dimension is rejected.
    """

    kind = "remote"

    def __init__(self, endpoint: str, model: str, dim: int,
                 api_key_env: str | None = None, timeout: float = 60.0,
                 session=None, sleep=time.sleep):
        if not endpoint:
            raise BackendUnavailable("remote embedder requires an endpoint")
        self.endpoint = endpoint
        self.model = model
        self.dim = dim
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.session = session
        self.sleep = sleep

    def embed(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        headers = _auth_headers(self.api_key_env)
        for lo in range(0, len(texts), EMBED_BATCH_LIMIT):
            batch = texts[lo:lo + EMBED_BATCH_LIMIT]
            body = _post_json(self.endpoint,
                              {"model": self.model, "input": batch},
                              headers, self.timeout, self.session, self.sleep)
            try:
                rows = sorted(body["data"], key=lambda r: r["index"])
                vecs = [np.asarray(r["embedding"], dtype=np.float64)
                        for r in rows]
            except (KeyError, TypeError, ValueError) as e:
                raise NetworkError(f"malformed embeddings response: {e}") from e
            if len(vecs) != len(batch):
                raise NetworkError(
                    f"expected {len(batch)} embeddings, got {len(vecs)}")
            for vec in vecs:
                if vec.shape != (self.dim,):
                    raise DimensionMismatch(
                        f"endpoint returned dimension {vec.shape}, "
                        f"store uses {self.dim}")
                norm = float(np.linalg.norm(vec))
                if norm > 0:
                    vec = vec / norm
                out.append(vec.astype(np.float32))
        return out

    def describe(self) -> dict:
        return {"kind": "remote", "dim": self.dim, "model": self.model,
                "endpoint": self.endpoint}


# --- structured output -----------------------------------------------------

def _first_json_block(raw: str) -> str | None:
    """First top-level balanced {...} span, string-aware. None if absent."""
    start = raw.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(raw)):
            c = raw[i]
            if in_string:
                if escaped:
                    escaped = False
                elif c == "\\":
                    escaped = True
                elif c == '"':
                    in_string = False
            elif c == '"':
                in_string = True
            elif c == "{":
                depth += 1
            elif c == "}":
                depth -= 1
                if depth == 0:
                    return raw[start:i + 1]
        start = raw.find("{", start + 1)
    return None


def _check_type(value, ftype: str):
    """Returns (ok, coerced_value). Booleans never pass numeric checks."""
    if ftype == "string":
        return isinstance(value, str), value
    if ftype == "integer":
        if isinstance(value, bool):
            return False, value
        if isinstance(value, int):
            return True, value
        if isinstance(value, float) and value.is_integer():
            return True, int(value)
        return False, value
    if ftype == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool), value
    if ftype == "boolean":
        return isinstance(value, bool), value
    if ftype == "string_list":
        ok = isinstance(value, list) and all(isinstance(v, str) for v in value)
        return ok, value
    raise ValueError(f"unknown field type: {ftype}")


def validate_structured(raw: str, schema: ExtractionSchema) -> ValidationResult:
    """Extract the first balanced JSON object from raw and check it.

    Violations are collected, not short-circuited; unknown fields are
    warnings only. A reply with no parseable object yields a single
    no_json violation.
    """
    block = _first_json_block(raw)
    parsed = None
    if block is not None:
        try:
            parsed = json.loads(block)
        except ValueError:
            parsed = None
    if not isinstance(parsed, dict):
        v = Violation("no_json", None, "no JSON object found in reply")
        return ValidationResult(False, None, (v,), ())
    violations: list[Violation] = []
    warnings: list[str] = []
    record: dict = {}
    for f in schema.fields:
        if f.name not in parsed:
            if f.required:
                violations.append(Violation(
                    "missing", f.name, f"required field {f.name} is missing"))
            continue
        ok, value = _check_type(parsed[f.name], f.type)
        if ok:
            record[f.name] = value
        else:
            violations.append(Violation(
                "wrong_type", f.name,
                f"field {f.name} must be {f.type}, "
                f"got {type(parsed[f.name]).__name__}"))
    known = set(schema.field_names())
    for name in parsed:
        if name not in known:
            warnings.append(f"unknown field ignored: {name}")
    if violations:
        return ValidationResult(False, None, tuple(violations),
                                tuple(warnings))
    return ValidationResult(True, record, (), tuple(warnings))


def schema_prompt_block(schema: ExtractionSchema) -> str:
    lines = ["Reply with a single JSON object and nothing else. Fields:"]
    for f in schema.fields:
        req = "required" if f.required else "optional"
        desc = f" -- {f.description}" if f.description else ""
        lines.append(f"- {f.name} ({f.type}, {req}){desc}")
    return "\n".join(lines)


def complete_structured(prompt: str, schema: ExtractionSchema, backend,
                        max_retries: int = 2, max_tokens: int = 512,
                        temperature: float = 0.0) -> dict:
    """Ask for schema-conformant JSON, re-prompting with the violation list
    on failure. Total calls = 1 + validation failures, capped at
    1 + max_retries; backend errors are not retried here.
    """
    base = prompt + "\n\n" + schema_prompt_block(schema)
    current = base
    last_raw = ""
    last_violations: tuple[Violation, ...] = ()
    for _ in range(max_retries + 1):
        completion = backend.complete(CompletionRequest(
            prompt=current, max_tokens=max_tokens, temperature=temperature))
        result = validate_structured(completion.text, schema)
        if result.ok:
            return result.record
        last_raw = completion.text
        last_violations = result.violations
        bullets = "\n".join(f"- {v.message}" for v in result.violations)
        current = (base + "\n\nYour previous reply was rejected:\n" + bullets
                   + "\nReply again with only the corrected JSON object.")
    raise StructuredFailure(last_raw, [v.message for v in last_violations])
