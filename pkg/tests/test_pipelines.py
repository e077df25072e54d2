import csv

import pytest

from docintel.dense import DenseIndex, HashEmbedder
from docintel.dual import DualIndex
from docintel.errors import EmptyQuestion, NetworkError
from docintel.ingest import Chunk, ChunkingParams
from docintel.llm import (
    Completion,
    ExtractionSchema,
    PromptTemplate,
    SchemaField,
)
from docintel.pipelines import (
    Answer,
    ExtractionRecord,
    Summary,
    ask,
    export_csv,
    extract,
    select_concept_units,
    split_units,
    summarize_concept,
    summarize_map_reduce,
)
from docintel.sparse import SparseIndex
from docintel.templates import CONCEPT_NOT_FOUND, NO_CONTEXT_ANSWER
from tests.conftest import canned

FLAT = ChunkingParams(chunk_size=10, overlap=0, snap_to_word_boundary=False)


def make_chunk(i, text, source="doc.txt"):
    return Chunk(chunk_id=f"c{i:04d}", source_path=source, start_offset=0,
                 end_offset=len(text), text=text, seq=i, doc_sha256="s")


class ScriptedBackend:
    """Serves a fixed script of reply strings or exceptions, in order."""

    backend_id = "scripted"

    def __init__(self, *script):
        self.script = list(script)
        self.call_log = []

    def complete(self, req):
        self.call_log.append(req)
        item = self.script.pop(0)
        if isinstance(item, Exception):
            raise item
        return Completion(text=item, finish_reason="stop", usage=(0, 0),
                          backend_id=self.backend_id)


# --- unit splitting ---------------------------------------------------------

def test_sentence_split_needs_uppercase_continuation():
    doc = "One two. Three four? It works! e.g. not here. Final."
    units = split_units(doc, "sentence")
    assert [t for _, t in units] == [
        "One two.", "Three four?", "It works! e.g. not here.", "Final."]
    assert [i for i, _ in units] == [0, 1, 2, 3]


def test_paragraph_split_on_blank_lines():
    doc = "first para\nstill first\n\nsecond\n\n\n\nthird"
    assert [t for _, t in split_units(doc, "paragraph")] == [
        "first para\nstill first", "second", "third"]


def test_passage_split_uses_chunk_spans():
    units = split_units("a" * 25, "passage", FLAT)
    assert [t for _, t in units] == ["a" * 10, "a" * 10, "a" * 5]


def test_split_validation_and_empties():
    with pytest.raises(ValueError):
        split_units("text", "stanza")
    assert split_units("   \n  ", "sentence") == []
    # whitespace-only passages fall out, later indices stay dense
    units = split_units("abc \n\n  \n\n def", "paragraph")
    assert units == [(0, "abc"), (1, "def")]


# --- ask --------------------------------------------------------------------

@pytest.fixture
def sparse_store():
    idx = SparseIndex()
    idx.add_chunk(make_chunk(0, "the cache stores hot entries", "cache.txt"))
    idx.add_chunk(make_chunk(1, "eviction removes cold entries", "cache.txt"))
    idx.add_chunk(make_chunk(2, "the parser builds a tree", "parse.txt"))
    return idx


def test_ask_prompts_with_numbered_context(sparse_store, echo_backend):
    a = ask("how does the cache work", sparse_store, echo_backend, k=2)
    assert isinstance(a, Answer)
    assert a.answer_text.startswith("STUB:")
    assert a.prompt_used == echo_backend.call_log[0].prompt
    assert "[1] cache.txt" in a.prompt_used
    assert "how does the cache work" in a.prompt_used
    assert 1 <= len(a.sources) <= 2
    top = a.sources[0]
    assert top.chunk_id == "c0000"
    assert top.snippet == "the cache stores hot entries"
    assert top.score > 0


def test_ask_empty_question(sparse_store, echo_backend):
    with pytest.raises(EmptyQuestion):
        ask("   ", sparse_store, echo_backend)


def test_ask_no_hits_sentinel_and_zero_calls(sparse_store, echo_backend):
    a = ask("zzzz qqqq", sparse_store, echo_backend)
    assert a.answer_text == NO_CONTEXT_ANSWER
    assert a.sources == ()
    assert a.prompt_used == ""
    assert echo_backend.call_log == []


def test_ask_empty_store_sentinel(echo_backend):
    a = ask("anything", SparseIndex(), echo_backend)
    assert a.answer_text == NO_CONTEXT_ANSWER
    assert echo_backend.call_log == []


def test_ask_dispatches_over_store_kinds(echo_backend):
    for store in (DenseIndex(dim=32), DualIndex()):
        store.add_chunk(make_chunk(0, "cache entries expire", "a.txt"))
        a = ask("cache", store, echo_backend)
        assert a.sources and a.sources[0].chunk_id == "c0000"
    with pytest.raises(TypeError):
        ask("q", object(), echo_backend)


def test_ask_snippet_truncated_to_200(echo_backend):
    idx = SparseIndex()
    idx.add_chunk(make_chunk(0, "cache " * 100, "a.txt"))
    a = ask("cache", idx, echo_backend)
    assert len(a.sources[0].snippet) == 200


# --- extraction -------------------------------------------------------------

T_EXTRACT = PromptTemplate.from_text("Pull fields from:\n{unit}")
SCHEMA = ExtractionSchema((SchemaField("name", "string"),
                           SchemaField("count", "integer")))


def test_extract_template_must_take_unit():
    bad = PromptTemplate.from_text("no slots")
    with pytest.raises(ValueError):
        extract(["u"], bad, SCHEMA, ScriptedBackend())


def test_extract_preserves_order_and_failures():
    backend = ScriptedBackend(
        '{"name": "a", "count": 1}',
        "not json at all",
        '{"name": "c", "count": 3}',
    )
    records = extract(["first", "second", "third"], T_EXTRACT, SCHEMA,
                      backend, max_retries=0)
    assert [r.status for r in records] == ["ok", "failed", "ok"]
    assert [r.unit_ref for r in records] == [
        ("", 0, "first"), ("", 1, "second"), ("", 2, "third")]
    assert records[0].record == {"name": "a", "count": 1}
    assert records[1].record is None
    assert records[1].violations and "no JSON" in records[1].violations[0]


def test_extract_accepts_ref_triples():
    backend = ScriptedBackend('{"name": "a", "count": 1}')
    records = extract([("docs/x.txt", 4, "text")], T_EXTRACT, SCHEMA, backend)
    assert records[0].unit_ref == ("docs/x.txt", 4, "text")


def test_extract_backend_error_is_row_not_abort():
    backend = ScriptedBackend(
        '{"name": "a", "count": 1}',
        NetworkError("endpoint down"),
        '{"name": "c", "count": 3}',
    )
    records = extract(["u1", "u2", "u3"], T_EXTRACT, SCHEMA, backend,
                      max_retries=0)
    assert [r.status for r in records] == ["ok", "failed", "ok"]
    assert "backend error: endpoint down" in records[1].violations[0]


def test_extract_retry_accounting():
    backend = ScriptedBackend("junk", '{"name": "a", "count": 1}')
    records = extract(["only"], T_EXTRACT, SCHEMA, backend, max_retries=2)
    assert records[0].status == "ok"
    assert len(backend.call_log) == 2    # 1 + one validation failure


def test_extraction_record_exactly_one_payload():
    with pytest.raises(ValueError):
        ExtractionRecord(("", 0, "t"), "ok")
    with pytest.raises(ValueError):
        ExtractionRecord(("", 0, "t"), "odd", record={}, violations=())


# --- csv export -------------------------------------------------------------

def test_csv_round_trips_awkward_values(tmp_path):
    schema = ExtractionSchema((
        SchemaField("title", "string"),
        SchemaField("n", "integer"),
        SchemaField("ok", "boolean"),
        SchemaField("tags", "string_list", required=False),
    ))
    records = [
        ExtractionRecord(("a.txt", 0, "u"), "ok", record={
            "title": 'has, "quotes"\nand newline', "n": 7, "ok": True,
            "tags": ["x", "y"]}),
        ExtractionRecord(("b.txt", 1, "u"), "failed",
                         violations=("missing title",)),
        ExtractionRecord(("c.txt", 2, "u"), "ok", record={
            "title": "plain", "n": 0, "ok": False}),
    ]
    path = tmp_path / "out.csv"
    export_csv(records, schema, path)
    raw = path.read_bytes()
    assert not raw.startswith(b"\xef\xbb\xbf")
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["source_path", "unit_index", "status",
                       "title", "n", "ok", "tags"]
    assert rows[1] == ["a.txt", "0", "ok", 'has, "quotes"\nand newline',
                       "7", "true", "x; y"]
    assert rows[2] == ["b.txt", "1", "failed", "", "", "", ""]
    assert rows[3] == ["c.txt", "2", "ok", "plain", "0", "false", ""]


# --- map-reduce summarization ----------------------------------------------

def doc_of_units(n):
    # chunk_size 10, no overlap: ceil(len/10) units
    return "a" * (10 * n - 5)


@pytest.mark.parametrize("n", list(range(1, 11)))
def test_map_reduce_call_law(n):
    backend = canned("piece")
    s = summarize_map_reduce(doc_of_units(n), backend, unit_params=FLAT)
    want_calls = 1 if n == 1 else n + 1
    assert len(backend.call_log) == want_calls
    assert s.units_considered == s.units_used == n
    assert len(s.map_outputs) == (0 if n == 1 else n)
    assert s.reduce_rounds == (0 if n == 1 else 1)
    assert s.strategy == "map_reduce"
    assert s.text == "piece"


def test_single_unit_takes_direct_path(echo_backend):
    s = summarize_map_reduce(doc_of_units(1), echo_backend, unit_params=FLAT)
    assert len(echo_backend.call_log) == 1
    assert s.map_outputs == () and s.reduce_rounds == 0
    assert "aaaaa" in echo_backend.call_log[0].prompt


def test_hierarchical_reduce_when_over_budget():
    # 4 map outputs of 120 chars; budget 250 holds only two at a time
    backend = canned("S" * 120)
    s = summarize_map_reduce(doc_of_units(4), backend, unit_params=FLAT,
                             max_reduce_chars=250)
    assert s.reduce_rounds == 2
    assert len(backend.call_log) == 4 + 2 + 1


def test_oversized_pieces_still_pair_up():
    # every piece alone exceeds the budget; grouping must still shrink
    backend = canned("S" * 120)
    s = summarize_map_reduce(doc_of_units(4), backend, unit_params=FLAT,
                             max_reduce_chars=50)
    assert s.reduce_rounds == 2
    assert len(backend.call_log) == 7


def test_blank_doc_rejected(echo_backend):
    with pytest.raises(ValueError):
        summarize_map_reduce("  \n ", echo_backend)


def test_summary_validation():
    with pytest.raises(ValueError):
        Summary(text="t", strategy="map_reduce",
                units_considered=1, units_used=2)


# --- concept-focused summarization ------------------------------------------

def test_select_concept_units_threshold_cap_order():
    scores = [0.5, 0.2, 0.9, 0.3, 0.9]
    assert select_concept_units(scores, 0.3, 3) == [0, 2, 4]
    assert select_concept_units(scores, 0.3, 10) == [0, 2, 3, 4]
    assert select_concept_units(scores, 0.95, 5) == []
    # at-threshold scores stay in; ties prefer earlier units
    assert select_concept_units([0.4, 0.4, 0.4], 0.4, 2) == [0, 1]


def topic_doc():
    w = "rain storm rain flood rain".ljust(30)
    f = "stock market stock bond yy".ljust(30)
    return w + w + f + f, ChunkingParams(chunk_size=30, overlap=0,
                                         snap_to_word_boundary=False)


def test_concept_summary_keeps_only_matching_units(echo_backend):
    doc, params = topic_doc()
    emb = HashEmbedder(64)
    s = summarize_concept(doc, "rain", emb, echo_backend, unit_params=params)
    assert s.strategy == "concept_focused"
    assert s.units_considered == 4
    assert s.units_used == 2
    prompts = [r.prompt for r in echo_backend.call_log]
    assert all("stock" not in p for p in prompts)
    assert any("rain storm" in p for p in prompts)
    # bound concept appears in every prompt
    assert all("rain" in p for p in prompts)


def test_concept_not_found_sentinel_zero_calls(echo_backend):
    doc, params = topic_doc()
    emb = HashEmbedder(64)
    s = summarize_concept(doc, "zebra", emb, echo_backend,
                          unit_params=params)
    assert s.text == CONCEPT_NOT_FOUND
    assert s.units_used == 0 and s.units_considered == 4
    assert echo_backend.call_log == []


def test_concept_empty_doc_sentinel(echo_backend):
    emb = HashEmbedder(32)
    s = summarize_concept("   ", "rain", emb, echo_backend)
    assert s.text == CONCEPT_NOT_FOUND
    assert s.units_considered == 0
    with pytest.raises(ValueError):
        summarize_concept("doc", "  ", emb, echo_backend)


def test_concept_max_units_cap(echo_backend):
    doc, params = topic_doc()
    emb = HashEmbedder(64)
    s = summarize_concept(doc, "rain", emb, echo_backend,
                          unit_params=params, max_units=1)
    assert s.units_used == 1
    assert len(echo_backend.call_log) == 1    # direct path for one unit
