"""HTTP endpoint contracts: status codes, error bodies, redaction."""

import dataclasses
import json

import pytest
from fastapi.testclient import TestClient

from docintel import __version__
from docintel.config import default_config, redacted_dict
from docintel.engine import Engine
from docintel.llm import StubBackend
from docintel.service import create_app
from docintel.store import Store
from tests.conftest import canned


def make_engine(tmp_path, backend=None, api_key_env=None):
    cfg = dataclasses.replace(
        default_config(), store_dir=str(tmp_path / "st"))
    if api_key_env is not None:
        cfg = dataclasses.replace(
            cfg, llm=dataclasses.replace(cfg.llm, api_key_env=api_key_env))
    if backend is None:
        backend = StubBackend(mode="echo_prompt")
    return Engine.init_store(cfg, backend=backend)


@pytest.fixture
def client(tmp_path, docs_folder):
    eng = make_engine(tmp_path, backend=canned("stub answer"))
    eng.ingest(docs_folder)
    with TestClient(create_app(eng),
                    raise_server_exceptions=False) as c:
        c.engine = eng
        yield c
    eng.close()


@pytest.fixture
def empty_client(tmp_path):
    eng = make_engine(tmp_path)
    with TestClient(create_app(eng), raise_server_exceptions=False) as c:
        c.engine = eng
        yield c
    eng.close()


def assert_error(resp, status, code, key=None):
    assert resp.status_code == status, resp.text
    body = resp.json()
    assert body["code"] == code
    assert isinstance(body["message"], str) and body["message"]
    if key is not None:
        assert body["detail"]["key"] == key
    return body


# --- health and config ------------------------------------------------------

def test_health(empty_client):
    assert empty_client.get("/health").json() == {
        "status": "ok", "version": __version__}


def test_config_is_redacted(tmp_path):
    eng = make_engine(tmp_path, api_key_env="SUPER_SECRET_VAR")
    with TestClient(create_app(eng)) as c:
        body = c.get("/config").json()
    dump = json.dumps(body)
    assert "SUPER_SECRET_VAR" not in dump
    assert "api_key" not in dump
    assert body == redacted_dict(eng.config)
    eng.close()


# --- ingest -----------------------------------------------------------------

def test_ingest_reports_counts(empty_client, docs_folder):
    body = empty_client.post("/ingest",
                             json={"path": str(docs_folder)}).json()
    assert body["files_seen"] == 5
    assert body["files_ingested"] == 5
    assert body["chunks_added"] > 0
    assert body["errors"] == []
    # second run skips every unchanged file
    again = empty_client.post("/ingest",
                              json={"path": str(docs_folder)}).json()
    assert again["files_skipped_unchanged"] == 5
    assert again["chunks_added"] == 0


def test_ingest_requires_path_field(empty_client):
    assert_error(empty_client.post("/ingest", json={}),
                 400, "invalid_value", key="path")


def test_ingest_bad_path_is_invalid_value(empty_client):
    assert_error(empty_client.post("/ingest", json={"path": "/no/such"}),
                 400, "invalid_value", key="path")


def test_concurrent_ingest_is_409(client, docs_folder):
    eng = client.engine
    other = Store.open(eng.config.store_dir, chunking=eng.config.chunking,
                       embedder=eng.embedder)
    other.acquire_writer()
    try:
        assert_error(client.post("/ingest", json={"path": str(docs_folder)}),
                     409, "ingest_in_progress")
    finally:
        other.release_writer()
        other.close()


# --- search -----------------------------------------------------------------

def test_search_returns_page(client):
    body = client.get("/search", params={"q": "zorblatt"}).json()
    assert body["total_hits"] >= 1
    assert body["hits"][0]["source_path"] == "b_caching.txt"
    assert set(body["hits"][0]) == {"chunk_id", "score", "snippet",
                                    "source_path"}


@pytest.mark.parametrize("mode", ["keyword", "semantic", "hybrid"])
def test_search_modes_all_serve(client, mode):
    resp = client.get("/search", params={"q": "cache commits", "mode": mode})
    assert resp.status_code == 200
    assert resp.json()["hits"]


def test_search_unknown_mode(client):
    assert_error(client.get("/search", params={"q": "x", "mode": "psychic"}),
                 400, "invalid_value", key="mode")


def test_search_blank_query(client):
    assert_error(client.get("/search", params={"q": "   "}),
                 400, "empty_query")


def test_search_parse_error_carries_position(client):
    body = assert_error(client.get("/search", params={"q": "cache AND"}),
                        400, "parse_error")
    assert isinstance(body["detail"]["position"], int)


def test_search_pure_negation(client):
    assert_error(client.get("/search", params={"q": "NOT cache"}),
                 400, "pure_negation_query")


def test_search_bad_page_bounds(client):
    assert_error(client.get("/search", params={"q": "x", "page": 0}),
                 400, "invalid_value", key="page")
    assert_error(client.get("/search", params={"q": "x", "page_size": 1001}),
                 400, "invalid_value", key="page_size")


def test_search_missing_q_is_invalid_request(client):
    body = assert_error(client.get("/search"), 400, "invalid_request")
    assert any("q" in e["loc"] for e in body["detail"])


def test_search_non_integer_page_is_invalid_request(client):
    assert_error(client.get("/search", params={"q": "x", "page": "two"}),
                 400, "invalid_request")


# --- ask --------------------------------------------------------------------

def test_ask_answers_with_sources(client):
    body = client.post("/ask", json={"question": "zorblatt?", "k": 2}).json()
    assert body["answer_text"] == "stub answer"
    assert len(body["sources"]) == 2
    assert body["sources"][0]["source_path"] == "b_caching.txt"
    assert body["prompt_used"]


def test_ask_requires_question(client):
    assert_error(client.post("/ask", json={}), 400, "invalid_value",
                 key="question")


def test_ask_rejects_non_integer_k(client):
    assert_error(client.post("/ask", json={"question": "x", "k": True}),
                 400, "invalid_value", key="k")
    assert_error(client.post("/ask", json={"question": "x", "k": "four"}),
                 400, "invalid_value", key="k")


def test_ask_blank_question_is_invalid_value(client):
    # _require catches whitespace before the pipeline ever runs
    assert_error(client.post("/ask", json={"question": "   "}),
                 400, "invalid_value", key="question")


def test_ask_punctuation_only_is_parse_error(client):
    assert_error(client.post("/ask", json={"question": "?!"}),
                 400, "parse_error")


# --- extract ----------------------------------------------------------------

SCHEMA = {"fields": [{"name": "topic", "type": "string", "required": True}]}


def test_extract_over_inline_units(tmp_path, docs_folder):
    eng = make_engine(tmp_path, backend=canned('{"topic": "a"}',
                                               '{"topic": "b"}'))
    eng.ingest(docs_folder)
    with TestClient(create_app(eng)) as c:
        body = c.post("/extract", json={
            "units": ["first unit", "second unit"],
            "template": "Label this: {unit}",
            "schema": SCHEMA,
        }).json()
    assert [r["status"] for r in body["records"]] == ["ok", "ok"]
    assert body["records"][0]["record"] == {"topic": "a"}
    assert body["csv_path"].endswith(".csv")
    eng.close()


def test_extract_requires_template(client):
    assert_error(client.post("/extract", json={"units": ["u"],
                                               "schema": SCHEMA}),
                 400, "invalid_value", key="template")


def test_extract_rejects_missing_schema(client):
    assert_error(client.post("/extract", json={"units": ["u"],
                                               "template": "x {unit}"}),
                 400, "invalid_value", key="schema")


def test_extract_units_source_exclusive(client):
    assert_error(client.post("/extract", json={
        "units": ["u"], "source_path": "b_caching.txt",
        "template": "x {unit}", "schema": SCHEMA}),
        400, "invalid_value", key="units")


# --- summarize --------------------------------------------------------------

def test_summarize_text(tmp_path):
    eng = make_engine(tmp_path, backend=canned("digest"))
    with TestClient(create_app(eng)) as c:
        body = c.post("/summarize", json={"text": "One tiny doc."}).json()
    assert body == {"text": "digest", "strategy": "map_reduce",
                    "units_considered": 1, "units_used": 1,
                    "reduce_rounds": 0}
    eng.close()


def test_summarize_unknown_source_is_404(client):
    assert_error(client.post("/summarize", json={"source_path": "ghost.txt"}),
                 404, "unknown_source")


def test_summarize_concept_mismatch(client):
    assert_error(client.post("/summarize",
                             json={"text": "x", "strategy": "map_reduce",
                                   "concept": "cache"}),
                 400, "invalid_value", key="concept")


# --- classify ---------------------------------------------------------------

EXAMPLES = [
    {"text": "sun sun warm", "label": "weather"},
    {"text": "rain rain wet", "label": "weather"},
    {"text": "stock stock fund", "label": "finance"},
    {"text": "bond bond yield", "label": "finance"},
]


def test_classify_train_then_predict(empty_client):
    trained = empty_client.post("/classify/train", json={
        "kind": "centroid_fewshot", "examples": EXAMPLES}).json()
    assert set(trained) == {"model_id", "kind", "classes"}
    assert sorted(trained["classes"]) == ["finance", "weather"]

    pred = empty_client.post("/classify/predict", json={
        "model_id": trained["model_id"], "text": "wet rain today"}).json()
    assert pred["label"] == "weather"
    assert set(pred["scores"]) == {"finance", "weather"}
    assert pred["kind"] == "centroid_fewshot"


def test_classify_train_from_dataset_file(empty_client, tmp_path):
    data = tmp_path / "train.jsonl"
    data.write_text("\n".join(json.dumps(r) for r in EXAMPLES))
    body = empty_client.post("/classify/train", json={
        "kind": "tfidf_linear", "dataset": str(data)}).json()
    assert body["kind"] == "tfidf_linear"


def test_classify_train_examples_dataset_exclusive(empty_client):
    assert_error(empty_client.post("/classify/train",
                                   json={"kind": "centroid_fewshot"}),
                 400, "invalid_value", key="examples")
    assert_error(empty_client.post("/classify/train", json={
        "kind": "centroid_fewshot", "examples": EXAMPLES,
        "dataset": "x.json"}), 400, "invalid_value", key="examples")


def test_classify_single_class_rejected(empty_client):
    assert_error(empty_client.post("/classify/train", json={
        "kind": "centroid_fewshot",
        "examples": [{"text": "a", "label": "only"},
                     {"text": "b", "label": "only"}]}),
        400, "single_class")


def test_classify_predict_unknown_model_is_404(empty_client):
    assert_error(empty_client.post("/classify/predict", json={
        "model_id": "feedfacedeadbeef", "text": "x"}),
        404, "unknown_model")


# --- framework edges --------------------------------------------------------

def test_unknown_route_is_shaped_404(client):
    assert_error(client.get("/no/such/route"), 404, "not_found")


def test_malformed_json_body_is_invalid_request(client):
    resp = client.post("/ask", content=b"{not json",
                       headers={"content-type": "application/json"})
    assert_error(resp, 400, "invalid_request")


def test_unexpected_exception_is_internal_error(client, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("wires crossed")
    monkeypatch.setattr(client.engine, "search", boom)
    body = assert_error(client.get("/search", params={"q": "x"}),
                        500, "internal_error")
    assert "wires crossed" in body["message"]
