"""One configured system behind a single facade.

The CLI and the HTTP service are both thin shells over Engine, so their
behavior cannot drift apart: config in, store + backends wired up, every
operation exposed as one method returning plain result objects.

Concurrency: a coarse mutex serializes everything that touches the
in-memory index. Reads could in principle run in parallel, but index
mutation during a concurrent dict iteration is a crash, and at the scale
this serves the mutex is invisible. The ingest writer lock (flock) is
taken *before* the mutex so a second concurrent ingest fails fast with
IngestInProgress instead of queueing behind the first.
"""

from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path

from . import templates
from .analysis import terms_of
from .classify import (
    CENTROID_FEWSHOT,
    TFIDF_LINEAR,
    LinearTextModel,
    load_model,
    model_id_for,
    predict,
    save_model,
    train_fewshot,
    train_tfidf_linear,
)
from .config import Config
from .dense import DenseIndex, make_embedder
from .dual import DualIndex
from .errors import (
    EmptyIndex,
    EmptyQuery,
    InvalidValue,
    UnknownModel,
)
from .ingest import IngestReport, ingest_folder
from .llm import (
    ExtractionSchema,
    HttpBackend,
    PromptTemplate,
    SchemaField,
    StubBackend,
)
from . import pipelines
from .pipelines import Answer, ExtractionRecord, Summary
from .query import Or, Term, parse_query, query_terms
from .sparse import PageHit, ResultPage, SparseIndex, highlight
from .store import Store

SEARCH_MODES = ("keyword", "semantic", "hybrid")
STRATEGIES = ("map_reduce", "concept_focused")
MODEL_KINDS = (CENTROID_FEWSHOT, TFIDF_LINEAR)


def make_engine_embedder(config: Config):
    e = config.embedder
    return make_embedder(e.kind, e.dim, model=e.model, endpoint=e.endpoint)


def make_backend(config: Config):
    """Build the LLM backend the config names. Stub needs nothing; http
    needs its endpoint (enforced at config parse and again here)."""
    llm = config.llm
    if llm.backend == "stub":
        return StubBackend(max_in_flight=config.server.max_in_flight)
    if llm.backend == "http":
        return HttpBackend(
            endpoint=llm.endpoint or "",
            model=llm.model or "",
            api_key_env=llm.api_key_env,
            max_in_flight=config.server.max_in_flight,
        )
    raise InvalidValue("llm.backend", f"unknown backend: {llm.backend}")


def _terms_node(text: str):
    """OR-of-terms query node for free text (no boolean syntax applied)."""
    terms = list(dict.fromkeys(terms_of(text)))
    if not terms:
        raise EmptyQuery("query has no indexable terms")
    if len(terms) == 1:
        return Term(terms[0])
    return Or(tuple(Term(t) for t in terms))


class Engine:
    def __init__(self, config: Config, store: Store, embedder=None,
                 backend=None):
        self.config = config
        self.store = store
        self.embedder = embedder if embedder is not None \
            else make_engine_embedder(config)
        self.backend = backend if backend is not None \
            else make_backend(config)
        self._mutex = threading.RLock()

    # --- construction -------------------------------------------------------

    @classmethod
    def init_store(cls, config: Config, embedder=None, backend=None) -> "Engine":
        emb = embedder if embedder is not None else make_engine_embedder(config)
        store = Store.create(
            config.store_dir, config.store_kind, chunking=config.chunking,
            bm25=config.bm25, hnsw=config.hnsw, fusion=config.fusion,
            embedder=emb)
        return cls(config, store, embedder=emb, backend=backend)

    @classmethod
    def open(cls, config: Config, embedder=None, backend=None) -> "Engine":
        emb = embedder if embedder is not None else make_engine_embedder(config)
        store = Store.open(config.store_dir, chunking=config.chunking,
                           embedder=emb)
        return cls(config, store, embedder=emb, backend=backend)

    @classmethod
    def open_or_create(cls, config: Config, embedder=None,
                       backend=None) -> "Engine":
        emb = embedder if embedder is not None else make_engine_embedder(config)
        store = Store.open_or_create(
            config.store_dir, config.store_kind, chunking=config.chunking,
            bm25=config.bm25, hnsw=config.hnsw, fusion=config.fusion,
            embedder=emb)
        return cls(config, store, embedder=emb, backend=backend)

    def close(self) -> None:
        self.store.close()

    # --- ingest -------------------------------------------------------------

    def ingest(self, path: str | Path) -> IngestReport:
        root = Path(path)
        if not root.is_dir():
            raise InvalidValue("path", f"not a directory: {root}")
        # flock first: a concurrent second ingest must fail fast, not
        # queue behind the mutex and run back to back.
        self.store.acquire_writer()
        try:
            with self._mutex:
                report = ingest_folder(root, self.store, self.store.chunking)
                self.store.commit()
            return report
        finally:
            self.store.release_writer()

    # --- search -------------------------------------------------------------

    def search(self, q: str, mode: str = "keyword", page: int = 1,
               page_size: int = 10) -> ResultPage:
        if mode not in SEARCH_MODES:
            raise InvalidValue("mode", f"must be one of {SEARCH_MODES}")
        if page < 1:
            raise InvalidValue("page", "must be >= 1")
        if not 1 <= page_size <= 1000:
            raise InvalidValue("page_size", "must be within [1, 1000]")
        if not q.strip():
            raise EmptyQuery("query is blank")
        with self._mutex:
            if mode == "keyword":
                return self._search_keyword(q, page, page_size)
            if mode == "semantic":
                return self._search_semantic(q, page, page_size)
            return self._search_hybrid(q, page, page_size)

    def _sparse_side(self) -> SparseIndex | None:
        idx = self.store.index
        if isinstance(idx, SparseIndex):
            return idx
        if isinstance(idx, DualIndex):
            return idx.sparse
        return None

    def _dense_side(self) -> DenseIndex | None:
        idx = self.store.index
        if isinstance(idx, DenseIndex):
            return idx
        if isinstance(idx, DualIndex):
            return idx.dense
        return None

    def _search_keyword(self, q, page, page_size) -> ResultPage:
        sparse = self._sparse_side()
        if sparse is None:
            raise InvalidValue(
                "mode", "keyword search needs a sparse or dual store")
        return sparse.search_page(q, page=page, page_size=page_size)

    def _search_semantic(self, q, page, page_size) -> ResultPage:
        k = page * page_size
        lo = (page - 1) * page_size
        dense = self._dense_side()
        if dense is None:
            # Sparse-only stores rerank a BM25 candidate pool by cosine;
            # free text becomes an OR query, no boolean syntax applied.
            sparse = self._sparse_side()
            rp = sparse.semantic_rerank(_terms_node(q), q, k, self.embedder)
            return ResultPage(rp.hits[lo:lo + page_size], rp.total_hits,
                              page, page_size)
        try:
            hits = dense.search(q, k)
        except EmptyIndex:
            return ResultPage((), 0, page, page_size)
        terms = terms_of(q)
        total = len(dense.by_chunk_id)
        out = tuple(
            PageHit(h.chunk_id, h.score, highlight(h.text, terms),
                    h.source_path)
            for h in hits[lo:lo + page_size]
        )
        return ResultPage(out, total, page, page_size)

    def _search_hybrid(self, q, page, page_size) -> ResultPage:
        idx = self.store.index
        if not isinstance(idx, DualIndex):
            raise InvalidValue("mode", "hybrid search needs a dual store")
        p = idx.fusion
        # The fused candidate list is bounded by the per-side depths, so
        # pagination slices one full fusion rather than refusing deep pages.
        fused = idx.hybrid_search(q, k=p.k_sparse + p.k_dense)
        terms = query_terms(parse_query(q))
        lo = (page - 1) * page_size
        out = tuple(
            PageHit(h.chunk_id, h.fused_score, highlight(h.text, terms),
                    h.source_path)
            for h in fused[lo:lo + page_size]
        )
        return ResultPage(out, len(fused), page, page_size)

    # --- question answering -------------------------------------------------

    def ask(self, question: str, k: int = 4) -> Answer:
        if k < 1:
            raise InvalidValue("k", "must be >= 1")
        with self._mutex:
            return pipelines.ask(question, self.store.index,
                                 self.backend, k=k)

    # --- extraction ---------------------------------------------------------

    def document_text(self, source_path: str) -> str:
        with self._mutex:
            return self.store.index.document_text(source_path)

    def _resolve_units(self, units, source_path, unit: str):
        if (units is None) == (source_path is None):
            raise InvalidValue(
                "units", "exactly one of units/source_path is required")
        if units is not None:
            if not isinstance(units, (list, tuple)) or \
                    not all(isinstance(u, str) for u in units):
                raise InvalidValue("units", "must be a list of strings")
            return list(units)
        doc = self.document_text(source_path)
        try:
            split = pipelines.split_units(doc, unit, self.config.chunking)
        except ValueError as e:
            raise InvalidValue("unit", str(e)) from e
        return [(source_path, i, text) for i, text in split]

    def extract(self, *, units=None, source_path=None, unit: str = "passage",
                template: str, schema, max_retries: int = 2,
                ) -> tuple[list[ExtractionRecord], str]:
        resolved = self._resolve_units(units, source_path, unit)
        try:
            t = PromptTemplate.from_text(template)
        except ValueError as e:
            raise InvalidValue("template", str(e)) from e
        if t.required_vars != {"unit"}:
            raise InvalidValue(
                "template", "must use exactly the {unit} placeholder")
        s = parse_schema(schema)
        records = pipelines.extract(resolved, t, s, self.backend,
                                    max_retries=max_retries)
        csv_path = self._write_export(records, s)
        return records, csv_path

    def _write_export(self, records, schema) -> str:
        exports = self.store.dir / "exports"
        exports.mkdir(parents=True, exist_ok=True)
        tmp = exports / ".tmp-export.csv"
        pipelines.export_csv(records, schema, tmp)
        digest = hashlib.sha256(tmp.read_bytes()).hexdigest()[:16]
        final = exports / f"extract-{digest}.csv"
        tmp.replace(final)
        return str(final)

    # --- summarization ------------------------------------------------------

    def summarize(self, *, source_path: str | None = None,
                  text: str | None = None, strategy: str | None = None,
                  concept: str | None = None) -> Summary:
        if (source_path is None) == (text is None):
            raise InvalidValue(
                "text", "exactly one of source_path/text is required")
        if strategy is None:
            strategy = "concept_focused" if concept else "map_reduce"
        if strategy not in STRATEGIES:
            raise InvalidValue("strategy", f"must be one of {STRATEGIES}")
        if strategy == "concept_focused" and not (concept or "").strip():
            raise InvalidValue("concept", "required for concept_focused")
        if strategy == "map_reduce" and concept is not None:
            raise InvalidValue("concept", "only valid with concept_focused")
        doc = self.document_text(source_path) if source_path is not None \
            else text
        if strategy == "map_reduce":
            if not doc.strip():
                raise InvalidValue("text", "document is empty")
            return pipelines.summarize_map_reduce(
                doc, self.backend, unit_params=self.config.chunking)
        return pipelines.summarize_concept(
            doc, concept, self.embedder, self.backend,
            unit_params=self.config.chunking)

    # --- classification -----------------------------------------------------

    def classify_train(self, kind: str,
                       pairs: list[tuple[str, str]]) -> tuple[str, LinearTextModel]:
        if kind not in MODEL_KINDS:
            raise InvalidValue("kind", f"must be one of {MODEL_KINDS}")
        if kind == CENTROID_FEWSHOT:
            model = train_fewshot(pairs, self.embedder)
            params = {"embedder": self.embedder.describe()}
        else:
            model = train_tfidf_linear(pairs)
            params = {
                "seed": model.training_meta.seed,
                "epochs": model.training_meta.epochs,
                "learning_rate": model.training_meta.learning_rate,
            }
        model_id = model_id_for(kind, pairs, params)
        save_model(model, self.store.models_dir / f"{model_id}.json")
        return model_id, model

    def classify_predict(self, model_id: str,
                         text: str) -> tuple[str, dict[str, float], LinearTextModel]:
        path = self.store.models_dir / f"{model_id}.json"
        if not path.exists():
            raise UnknownModel(f"no such model: {model_id}")
        model = load_model(path)
        emb = self.embedder if model.kind == CENTROID_FEWSHOT else None
        label, scores = predict(model, text, embedder=emb)
        return label, scores, model


def parse_schema(raw) -> ExtractionSchema:
    """Wire-shape schema ({"fields":[...]} or a bare field list) into an
    ExtractionSchema; anything malformed is an InvalidValue."""
    if isinstance(raw, ExtractionSchema):
        return raw
    if isinstance(raw, dict):
        raw = raw.get("fields")
    if not isinstance(raw, (list, tuple)) or not raw:
        raise InvalidValue("schema", "must be a non-empty field list")
    fields = []
    for rec in raw:
        if not isinstance(rec, dict):
            raise InvalidValue("schema", "each field must be an object")
        try:
            fields.append(SchemaField(
                name=rec.get("name", ""),
                type=rec.get("type", ""),
                required=bool(rec.get("required", True)),
                description=rec.get("description", ""),
            ))
        except ValueError as e:
            raise InvalidValue("schema", str(e)) from e
    try:
        return ExtractionSchema(tuple(fields))
    except ValueError as e:
        raise InvalidValue("schema", str(e)) from e


def parse_examples(raw) -> list[tuple[str, str]]:
    """Wire-shape training examples ([{"text","label"}] objects) into the
    (text, label) pairs the trainers take."""
    if not isinstance(raw, (list, tuple)) or not raw:
        raise InvalidValue("examples", "must be a non-empty list")
    pairs = []
    for rec in raw:
        if not (isinstance(rec, dict)
                and isinstance(rec.get("text"), str)
                and isinstance(rec.get("label"), str)):
            raise InvalidValue(
                "examples", 'each example needs string "text" and "label"')
        pairs.append((rec["text"], rec["label"]))
    return pairs


def load_examples_file(path: str | Path) -> list[tuple[str, str]]:
    """Dataset file: .json holds one array of {"text","label"} objects,
    .jsonl holds one such object per line."""
    p = Path(path)
    if not p.is_file():
        raise InvalidValue("dataset", f"no such file: {p}")
    text = p.read_text(encoding="utf-8")
    try:
        if p.suffix == ".jsonl":
            raw = [json.loads(line) for line in text.splitlines()
                   if line.strip()]
        elif p.suffix == ".json":
            raw = json.loads(text)
        else:
            raise InvalidValue("dataset", "expected a .json or .jsonl file")
    except ValueError as e:
        raise InvalidValue("dataset", f"cannot parse {p.name}: {e}") from e
    return parse_examples(raw)


# --- wire shapes -----------------------------------------------------------
# The CLI's --json output and the service bodies are the same objects,
# produced here so the two surfaces cannot disagree.

def page_to_dict(rp: ResultPage) -> dict:
    return {
        "hits": [
            {"chunk_id": h.chunk_id, "score": h.score, "snippet": h.snippet,
             "source_path": h.source_path}
            for h in rp.hits
        ],
        "total_hits": rp.total_hits,
        "page": rp.page,
        "page_size": rp.page_size,
    }


def answer_to_dict(ans: Answer) -> dict:
    return {
        "question": ans.question,
        "answer_text": ans.answer_text,
        "sources": [
            {"chunk_id": s.chunk_id, "source_path": s.source_path,
             "snippet": s.snippet, "score": s.score}
            for s in ans.sources
        ],
        "prompt_used": ans.prompt_used,
    }


def record_to_dict(rec: ExtractionRecord) -> dict:
    out = {
        "source_path": rec.unit_ref[0],
        "unit_index": rec.unit_ref[1],
        "unit_text": rec.unit_ref[2],
        "status": rec.status,
    }
    if rec.status == "ok":
        out["record"] = rec.record
    else:
        out["violations"] = list(rec.violations or ())
    return out


def summary_to_dict(s: Summary) -> dict:
    return {
        "text": s.text,
        "strategy": s.strategy,
        "units_considered": s.units_considered,
        "units_used": s.units_used,
        "reduce_rounds": s.reduce_rounds,
    }


def templates_text() -> str:
    """All shipped prompt templates in a stable printable form."""
    blocks = []
    for name, t in sorted(templates.all_templates().items()):
        header = f"# {name} (version {templates.TEMPLATE_VERSION})"
        blocks.append(f"{header}\n{t.template}")
    return "\n\n".join(blocks)
