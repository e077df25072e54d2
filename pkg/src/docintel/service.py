"""HTTP surface over Engine.

Every non-2xx body is exactly one error object:

    {"code": "<machine_readable>", "message": "...", "detail": {...}?}

including bodies the framework would otherwise shape itself (validation
failures, unknown routes). Codes come from the exception class names, so
the hierarchy in errors.py is the single naming authority.

Logs go to stderr as JSON lines; nothing here ever logs key material.
"""

from __future__ import annotations

import json
import logging
import sys

from fastapi import Body, FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException as StarletteHTTPException

from . import __version__
from .config import Config, redacted_dict
from .engine import (
    Engine,
    answer_to_dict,
    load_examples_file,
    page_to_dict,
    parse_examples,
    record_to_dict,
    summary_to_dict,
)
from .errors import (
    BackendUnavailable,
    ConfigParseError,
    CorruptStore,
    DimensionMismatch,
    DocIntelError,
    DuplicateChunk,
    EmptyExamples,
    EmptyQuery,
    EmptyQuestion,
    HttpStatusError,
    IngestInProgress,
    InvalidValue,
    IoError,
    NetworkError,
    ParseError,
    PureNegationQuery,
    SingleClass,
    UnknownChunk,
    UnknownKey,
    UnknownModel,
    UnknownSource,
    UnsupportedFormat,
    ZeroVector,
)

_STATUS_BY_TYPE: list[tuple[tuple, int]] = [
    ((IngestInProgress,), 409),
    ((UnknownModel, UnknownSource, UnknownChunk), 404),
    ((BackendUnavailable, NetworkError, HttpStatusError), 503),
    ((ParseError, EmptyQuery, PureNegationQuery, EmptyQuestion,
      InvalidValue, UnknownKey, ConfigParseError, UnsupportedFormat,
      EmptyExamples, SingleClass, DuplicateChunk, DimensionMismatch,
      ZeroVector), 400),
    ((CorruptStore, IoError), 500),
]


def _status_for(exc: DocIntelError) -> int:
    for types, status in _STATUS_BY_TYPE:
        if isinstance(exc, types):
            return status
    return 500


def _detail_for(exc: DocIntelError) -> dict | None:
    if isinstance(exc, ParseError):
        return {"position": exc.position}
    if isinstance(exc, HttpStatusError):
        return {"status": exc.status}
    if isinstance(exc, (UnknownKey, InvalidValue)):
        return {"key": exc.key}
    if isinstance(exc, ConfigParseError):
        return {"line": exc.line}
    return None


def _error_body(code: str, message: str, detail=None) -> dict:
    body = {"code": code, "message": message}
    if detail is not None:
        body["detail"] = detail
    return body


def _require(payload: dict, key: str, kind=str):
    value = payload.get(key)
    if not isinstance(value, kind) or (kind is str and not value.strip()):
        raise InvalidValue(key, f"required {kind.__name__} field")
    return value


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="docintel", docs_url=None, redoc_url=None,
                  openapi_url=None)
    log = logging.getLogger("docintel.service")

    @app.exception_handler(DocIntelError)
    async def on_engine_error(request: Request, exc: DocIntelError):
        status = _status_for(exc)
        if status >= 500:
            log.error("request failed: %s: %s", exc.code, exc)
        return JSONResponse(
            status_code=status,
            content=_error_body(exc.code, str(exc), _detail_for(exc)))

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request,
                                  exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content=_error_body("invalid_request", "malformed request",
                                detail=[
                                    {"loc": [str(p) for p in e["loc"]],
                                     "message": e["msg"]}
                                    for e in exc.errors()
                                ]))

    @app.exception_handler(StarletteHTTPException)
    async def on_http_error(request: Request, exc: StarletteHTTPException):
        code = "not_found" if exc.status_code == 404 else "http_error"
        return JSONResponse(status_code=exc.status_code,
                            content=_error_body(code, str(exc.detail)))

    @app.exception_handler(Exception)
    async def on_unexpected(request: Request, exc: Exception):
        log.exception("unhandled error")
        return JSONResponse(
            status_code=500,
            content=_error_body("internal_error",
                                f"{type(exc).__name__}: {exc}"))

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/ingest")
    def ingest(payload: dict = Body(...)):
        path = _require(payload, "path")
        report = engine.ingest(path)
        return report.to_dict()

    @app.get("/search")
    def search(q: str = Query(...), page: int = 1, page_size: int = 10,
               mode: str = "keyword"):
        return page_to_dict(engine.search(q, mode=mode, page=page,
                                          page_size=page_size))

    @app.post("/ask")
    def ask(payload: dict = Body(...)):
        question = _require(payload, "question")
        k = payload.get("k", 4)
        if not isinstance(k, int) or isinstance(k, bool):
            raise InvalidValue("k", "must be an integer")
        return answer_to_dict(engine.ask(question, k=k))

    @app.post("/extract")
    def run_extract(payload: dict = Body(...)):
        units = payload.get("units")
        source_path = payload.get("source_path")
        records, csv_path = engine.extract(
            units=units,
            source_path=source_path,
            unit=payload.get("unit", "passage"),
            template=_require(payload, "template"),
            schema=payload.get("schema"),
        )
        return {"records": [record_to_dict(r) for r in records],
                "csv_path": csv_path}

    @app.post("/summarize")
    def summarize(payload: dict = Body(...)):
        return summary_to_dict(engine.summarize(
            source_path=payload.get("source_path"),
            text=payload.get("text"),
            strategy=payload.get("strategy"),
            concept=payload.get("concept"),
        ))

    @app.post("/classify/train")
    def classify_train(payload: dict = Body(...)):
        kind = _require(payload, "kind")
        examples = payload.get("examples")
        dataset = payload.get("dataset")
        if (examples is None) == (dataset is None):
            raise InvalidValue(
                "examples", "exactly one of examples/dataset is required")
        if examples is not None:
            pairs = parse_examples(examples)
        else:
            pairs = load_examples_file(dataset)
        model_id, model = engine.classify_train(kind, pairs)
        return {"model_id": model_id, "kind": model.kind,
                "classes": model.classes}

    @app.post("/classify/predict")
    def classify_predict(payload: dict = Body(...)):
        model_id = _require(payload, "model_id")
        text = _require(payload, "text")
        label, scores, model = engine.classify_predict(model_id, text)
        return {"model_id": model_id, "label": label, "scores": scores,
                "kind": model.kind}

    @app.get("/config")
    def config():
        return redacted_dict(engine.config)

    return app


class _JsonLineFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        entry = {
            "ts": round(record.created, 3),
            "level": record.levelname.lower(),
            "logger": record.name,
            "message": record.getMessage(),
        }
        if record.exc_info:
            entry["exception"] = self.formatException(record.exc_info)
        return json.dumps(entry, ensure_ascii=False)


def setup_logging(level: int = logging.INFO) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonLineFormatter())
    root = logging.getLogger()
    root.handlers = [handler]
    root.setLevel(level)


def serve(config: Config) -> None:
    """Open (or create) the configured store and block serving HTTP."""
    import uvicorn

    setup_logging()
    engine = Engine.open_or_create(config)
    app = create_app(engine)
    logging.getLogger("docintel.service").info(
        "serving on %s:%d (store %s, kind %s)",
        config.server.bind_addr, config.server.port,
        config.store_dir, engine.store.kind)
    try:
        uvicorn.run(app, host=config.server.bind_addr,
                    port=config.server.port, log_config=None)
    finally:
        engine.close()
