"""Prebuilt workflows over stores and backends: question answering with
source attribution, structured extraction to CSV, map-reduce and
concept-focused summarization, and classifier training glue.

Everything here is stateless; stores and backends are passed in. All
workflows run to completion against the stub backend with no network.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass

from .dense import DenseIndex
from .dual import DualIndex
from .errors import (
    BackendUnavailable,
    DocIntelError,
    EmptyIndex,
    EmptyQuery,
    EmptyQuestion,
    HttpStatusError,
    IoError,
    NetworkError,
    StructuredFailure,
)
from .ingest import ChunkingParams, chunk_spans
from .llm import (
    CompletionRequest,
    ExtractionSchema,
    PromptTemplate,
    bind_vars,
    complete_structured,
    render_prompt,
)
from .sparse import SparseIndex
from . import templates

SNIPPET_CHARS = 200
DEFAULT_MAX_REDUCE_CHARS = 8000
DEFAULT_SIM_THRESHOLD = 0.3
DEFAULT_MAX_CONCEPT_UNITS = 20

UNIT_KINDS = ("sentence", "paragraph", "passage")

_SENTENCE_BOUNDARY = re.compile(r"(?<=[.?!])\s+(?=[A-Z])")
_PARAGRAPH_BOUNDARY = re.compile(r"\n\s*\n")


# --- unit splitting --------------------------------------------------------

def split_units(doc_text: str, unit: str = "passage",
                params: ChunkingParams | None = None) -> list[tuple[int, str]]:
    """Split a document into indexed units.

    sentence: break after [.?!] when followed by whitespace and an
    uppercase letter (deliberately naive; the rule, not linguistics, is
    the contract). paragraph: blank-line separated. passage: the same
    overlapping character spans used at ingest time.
    """
    if unit not in UNIT_KINDS:
        raise ValueError(f"unknown unit kind: {unit}")
    if not doc_text.strip():
        return []
    if unit == "sentence":
        parts = _SENTENCE_BOUNDARY.split(doc_text)
    elif unit == "paragraph":
        parts = _PARAGRAPH_BOUNDARY.split(doc_text)
    else:
        p = params or ChunkingParams()
        parts = [doc_text[s:e] for s, e in chunk_spans(doc_text, p)]
    out = []
    for text in parts:
        text = text.strip()
        if text:
            out.append((len(out), text))
    return out


# --- retrieval-augmented ask ----------------------------------------------

@dataclass(frozen=True)
class Source:
    chunk_id: str
    source_path: str
    snippet: str
    score: float


@dataclass(frozen=True)
class Answer:
    question: str
    answer_text: str
    sources: tuple[Source, ...]
    prompt_used: str


def _retrieve(store, question: str, k: int) -> list[tuple[str, str, str, float]]:
    """Uniform top-k retrieval: (chunk_id, source_path, text, score)."""
    try:
        if isinstance(store, DualIndex):
            hits = store.hybrid_search(question, k)
            return [(h.chunk_id, h.source_path, h.text, h.fused_score)
                    for h in hits]
        if isinstance(store, SparseIndex):
            hits = store.rank_text(question, k)
            return [(h.chunk_id, h.source_path, h.text, h.score)
                    for h in hits]
        if isinstance(store, DenseIndex):
            hits = store.search(question, k)
            return [(h.chunk_id, h.source_path, h.text, h.score)
                    for h in hits]
    except (EmptyQuery, EmptyIndex):
        return []
    raise TypeError(f"not a store: {store!r}")


def build_context(hits: list[tuple[str, str, str, float]]) -> str:
    blocks = []
    for n, (_, source_path, text, _) in enumerate(hits, start=1):
        blocks.append(f"[{n}] {source_path}\n{text}")
    return "\n\n".join(blocks)


def ask(question: str, store, llm, k: int = 4,
        template: PromptTemplate | None = None) -> Answer:
    """Retrieve top-k chunks, prompt the backend with a numbered context
    block, and return the answer with its sources and the exact prompt.

    Zero retrieval hits short-circuit to a fixed sentinel answer with no
    backend call, so an empty store can never produce fabricated text.
    """
    if not question.strip():
        raise EmptyQuestion("question must be non-empty")
    t = template or templates.ASK_V1
    hits = _retrieve(store, question, k)
    if not hits:
        return Answer(question, templates.NO_CONTEXT_ANSWER, (), "")
    prompt = render_prompt(t, {
        "context": build_context(hits),
        "question": question,
    })
    completion = llm.complete(CompletionRequest(prompt=prompt))
    sources = tuple(
        Source(cid, sp, text[:SNIPPET_CHARS], score)
        for cid, sp, text, score in hits
    )
    return Answer(question, completion.text, sources, prompt)


# --- structured extraction -------------------------------------------------

@dataclass(frozen=True)
class ExtractionRecord:
    unit_ref: tuple[str, int, str]     # (source_path, unit_index, unit_text)
    status: str                        # ok | failed
    record: dict | None = None
    violations: tuple[str, ...] | None = None

    def __post_init__(self):
        if (self.record is None) == (self.violations is None):
            raise ValueError("exactly one of record/violations is set")


def extract(units, template: PromptTemplate, schema: ExtractionSchema,
            llm, max_retries: int = 2) -> list[ExtractionRecord]:
    """Run complete_structured per unit; failures become failed records,
    never batch aborts. Units may be plain strings or
    (source_path, unit_index, unit_text) triples; order is preserved.
    """
    if template.required_vars != {"unit"}:
        raise ValueError("extraction template must require exactly {unit}")
    records: list[ExtractionRecord] = []
    for i, unit in enumerate(units):
        if isinstance(unit, str):
            ref = ("", i, unit)
        else:
            source_path, unit_index, unit_text = unit
            ref = (source_path, unit_index, unit_text)
        prompt = render_prompt(template, {"unit": ref[2]})
        try:
            rec = complete_structured(prompt, schema, llm,
                                      max_retries=max_retries)
            records.append(ExtractionRecord(ref, "ok", record=rec))
        except StructuredFailure as e:
            records.append(ExtractionRecord(
                ref, "failed", violations=tuple(str(v) for v in e.violations)))
        except (NetworkError, HttpStatusError, BackendUnavailable) as e:
            # A dead backend mid-batch is still per-unit data; the batch
            # finishes and the row says why.
            records.append(ExtractionRecord(
                ref, "failed", violations=(f"backend error: {e}",)))
    return records


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return "; ".join(value)
    return str(value)


def export_csv(records: list[ExtractionRecord], schema: ExtractionSchema,
               path) -> None:
    """Header is source_path, unit_index, status, then the schema fields in
    declaration order. UTF-8, no byte-order mark, RFC 4180 quoting."""
    names = schema.field_names()
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["source_path", "unit_index", "status"] + names)
            for rec in records:
                row = [rec.unit_ref[0], str(rec.unit_ref[1]), rec.status]
                if rec.status == "ok":
                    row += [_csv_cell(rec.record.get(n)) for n in names]
                else:
                    row += ["" for _ in names]
                writer.writerow(row)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


# --- summarization ---------------------------------------------------------

@dataclass(frozen=True)
class Summary:
    text: str
    strategy: str                      # map_reduce | concept_focused
    units_considered: int
    units_used: int
    map_outputs: tuple[str, ...] = ()
    reduce_rounds: int = 0

    def __post_init__(self):
        if self.units_used > self.units_considered:
            raise ValueError("units_used exceeds units_considered")


def _complete_unit(llm, template: PromptTemplate, var: str, value: str,
                   unit_index: int | None) -> str:
    prompt = render_prompt(template, {var: value})
    try:
        return llm.complete(CompletionRequest(prompt=prompt)).text
    except DocIntelError as e:
        if unit_index is not None:
            e.unit_index = unit_index
        raise


def _group_by_budget(items: list[str], max_chars: int,
                     sep: str = "\n\n") -> list[list[str]]:
    """Greedy left-to-right grouping: a group grows while its joined text
    stays within max_chars; an oversized single item gets its own group."""
    groups: list[list[str]] = []
    current: list[str] = []
    size = 0
    for item in items:
        added = len(item) if not current else size + len(sep) + len(item)
        if current and added > max_chars:
            groups.append(current)
            current, size = [item], len(item)
        else:
            current, size = current + [item], added
    if current:
        groups.append(current)
    return groups


def _map_reduce_core(units: list[str], llm, map_template: PromptTemplate,
                     reduce_template: PromptTemplate,
                     max_reduce_chars: int) -> tuple[str, list[str], int]:
    """Returns (final_text, map_outputs, reduce_rounds).

    One unit takes the direct path: a single map call, no reduce, empty
    map_outputs.
    """
    if len(units) == 1:
        return _complete_unit(llm, map_template, "unit", units[0], 0), [], 0
    map_outputs = [
        _complete_unit(llm, map_template, "unit", u, i)
        for i, u in enumerate(units)
    ]
    current = list(map_outputs)
    rounds = 0
    while len(current) > 1:
        rounds += 1
        groups = _group_by_budget(current, max_reduce_chars)
        if len(groups) == len(current):
            # Every piece is over budget on its own; pair them up anyway
            # or the rounds would never shrink the list.
            groups = [current[i:i + 2] for i in range(0, len(current), 2)]
        current = [
            _complete_unit(llm, reduce_template, "summaries",
                           "\n\n".join(g), None)
            for g in groups
        ]
    return current[0], map_outputs, rounds


def summarize_map_reduce(doc_text: str, llm,
                         unit_params: ChunkingParams | None = None,
                         map_template: PromptTemplate | None = None,
                         reduce_template: PromptTemplate | None = None,
                         max_reduce_chars: int = DEFAULT_MAX_REDUCE_CHARS) -> Summary:
    """Summarize passages independently, then summarize the summaries,
    hierarchically when the concatenation exceeds max_reduce_chars."""
    if not doc_text.strip():
        raise ValueError("doc_text must be non-empty")
    units = [text for _, text in split_units(doc_text, "passage", unit_params)]
    text, map_outputs, rounds = _map_reduce_core(
        units, llm,
        map_template or templates.MAP_V1,
        reduce_template or templates.REDUCE_V1,
        max_reduce_chars)
    return Summary(text=text, strategy="map_reduce",
                   units_considered=len(units), units_used=len(units),
                   map_outputs=tuple(map_outputs), reduce_rounds=rounds)


def select_concept_units(scores: list[float], threshold: float,
                         max_units: int) -> list[int]:
    """Indices scoring >= threshold, best max_units of them (score
    descending, index ascending on ties), returned in document order."""
    kept = [(i, s) for i, s in enumerate(scores) if s >= threshold]
    kept.sort(key=lambda pair: (-pair[1], pair[0]))
    return sorted(i for i, _ in kept[:max_units])


def summarize_concept(doc_text: str, concept: str, embedder, llm,
                      sim_threshold: float = DEFAULT_SIM_THRESHOLD,
                      max_units: int = DEFAULT_MAX_CONCEPT_UNITS,
                      unit_params: ChunkingParams | None = None,
                      max_reduce_chars: int = DEFAULT_MAX_REDUCE_CHARS) -> Summary:
    """Summarize only passages whose embedding is close to the concept's.

    No passage over the threshold means no backend calls at all, just the
    fixed not-found sentinel.
    """
    if not concept.strip():
        raise ValueError("concept must be non-empty")
    if not doc_text.strip():
        return Summary(text=templates.CONCEPT_NOT_FOUND,
                       strategy="concept_focused",
                       units_considered=0, units_used=0)
    units = [text for _, text in split_units(doc_text, "passage", unit_params)]
    cv = embedder.embed(concept)
    scores = [float(cv @ embedder.embed(u)) for u in units]
    kept = select_concept_units(scores, sim_threshold, max_units)
    if not kept:
        return Summary(text=templates.CONCEPT_NOT_FOUND,
                       strategy="concept_focused",
                       units_considered=len(units), units_used=0)
    map_t = bind_vars(templates.CONCEPT_MAP_V1, {"concept": concept})
    reduce_t = bind_vars(templates.CONCEPT_REDUCE_V1, {"concept": concept})
    text, map_outputs, rounds = _map_reduce_core(
        [units[i] for i in kept], llm, map_t, reduce_t, max_reduce_chars)
    return Summary(text=text, strategy="concept_focused",
                   units_considered=len(units), units_used=len(kept),
                   map_outputs=tuple(map_outputs), reduce_rounds=rounds)
