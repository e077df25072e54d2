import dataclasses
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from docintel.config import (
    Config,
    default_config,
    load_config,
    parse_config,
    redacted_dict,
    serialize_config,
)
from docintel.errors import (
    ConfigParseError,
    InvalidValue,
    IoError,
    UnknownKey,
)

FULL = """\
# full example, every key set
[store]
dir = /data/idx
kind = sparse

[chunking]
chunk_size = 300
overlap = 30
snap_to_word_boundary = false

[bm25]
k1 = 1.5
b = 0.6

[hnsw]
m = 8
ef_construction = 100
ef_search = 25
rng_seed = 7

[fusion]
method = rrf
rrf_k = 90
k_dense = 20
k_sparse = 30

[llm]
backend = http
endpoint = http://localhost:9000/v1/chat
model = small-9b
api_key_env = LLM_KEY

[embedder]
kind = remote
dim = 64
endpoint = http://localhost:9001/embed
model = embed-s

[server]
bind_addr = 0.0.0.0
port = 9999
max_in_flight = 2
allow_non_loopback = true
"""


def test_defaults_are_offline_and_loopback():
    cfg = default_config()
    assert (cfg.store_dir, cfg.store_kind) == ("store", "dual")
    assert (cfg.chunking.chunk_size, cfg.chunking.overlap) == (500, 50)
    assert cfg.chunking.snap_to_word_boundary is True
    assert (cfg.bm25.k1, cfg.bm25.b) == (1.2, 0.75)
    assert (cfg.hnsw.m, cfg.hnsw.ef_construction,
            cfg.hnsw.ef_search, cfg.hnsw.rng_seed) == (16, 200, 50, 42)
    assert (cfg.fusion.method, cfg.fusion.rrf_k,
            cfg.fusion.k_dense, cfg.fusion.k_sparse) == ("rrf", 60, 50, 50)
    assert cfg.llm.backend == "stub" and cfg.llm.endpoint is None
    assert (cfg.embedder.kind, cfg.embedder.dim) == ("hash", 256)
    assert cfg.server.bind_addr == "127.0.0.1"
    assert cfg.server.port == 8080
    assert cfg.server.allow_non_loopback is False


def test_empty_text_gives_defaults():
    assert parse_config("") == default_config()
    assert parse_config("\n# only a comment\n") == default_config()


def test_full_file_parses_every_key():
    cfg = parse_config(FULL)
    assert cfg.store_dir == "/data/idx" and cfg.store_kind == "sparse"
    assert cfg.chunking.chunk_size == 300
    assert cfg.chunking.snap_to_word_boundary is False
    assert cfg.bm25.k1 == 1.5 and cfg.bm25.b == 0.6
    assert cfg.hnsw.rng_seed == 7
    assert cfg.fusion.k_sparse == 30
    assert cfg.llm.backend == "http"
    assert cfg.llm.api_key_env == "LLM_KEY"
    assert cfg.embedder.kind == "remote" and cfg.embedder.dim == 64
    assert cfg.server.bind_addr == "0.0.0.0"
    assert cfg.server.allow_non_loopback is True


def test_partial_file_keeps_other_defaults():
    cfg = parse_config("[bm25]\nk1 = 2.0\n")
    assert cfg.bm25.k1 == 2.0
    assert cfg.bm25.b == 0.75
    assert cfg.store_kind == "dual"


# --- strictness -------------------------------------------------------------

def test_key_outside_section():
    with pytest.raises(ConfigParseError) as ei:
        parse_config("dir = /tmp\n")
    assert ei.value.line == 1


def test_garbage_line():
    with pytest.raises(ConfigParseError) as ei:
        parse_config("[store]\n???nonsense\n")
    assert ei.value.line == 2


def test_duplicate_key():
    with pytest.raises(ConfigParseError) as ei:
        parse_config("[bm25]\nk1 = 1.0\nk1 = 2.0\n")
    assert ei.value.line == 3


def test_unknown_section_rejected():
    with pytest.raises(UnknownKey) as ei:
        parse_config("[storage]\nx = 1\n")
    assert ei.value.key == "storage"
    assert ei.value.line == 2
    with pytest.raises(UnknownKey):
        parse_config("[storage]\n")


def test_unknown_key_rejected_with_location():
    with pytest.raises(UnknownKey) as ei:
        parse_config("[store]\ndir = /tmp/x\nwat = 1\n")
    assert ei.value.key == "store.wat"
    assert ei.value.line == 3


def test_inline_comments_are_not_a_thing():
    with pytest.raises(InvalidValue) as ei:
        parse_config("[bm25]\nk1 = 1.2 # nope\n")
    assert ei.value.key == "bm25.k1"


@pytest.mark.parametrize("text,key", [
    ("[chunking]\nchunk_size = many\n", "chunking.chunk_size"),
    ("[bm25]\nb = high\n", "bm25.b"),
    ("[server]\nallow_non_loopback = yes\n", "server.allow_non_loopback"),
    ("[store]\nkind = cloud\n", "store.kind"),
    ("[store]\ndir =\n", "store.dir"),
    ("[llm]\nbackend = http\n", "llm.endpoint"),
    ("[embedder]\nkind = remote\n", "embedder.endpoint"),
    ("[embedder]\ndim = 4\n", "embedder.dim"),
    ("[server]\nport = 70000\n", "server.port"),
    ("[server]\nmax_in_flight = 0\n", "server.max_in_flight"),
])
def test_invalid_values_name_the_key(text, key):
    with pytest.raises(InvalidValue) as ei:
        parse_config(text)
    assert ei.value.key == key


def test_empty_optional_value_means_unset():
    cfg = parse_config("[llm]\nendpoint =\nmodel =\n")
    assert cfg.llm.endpoint is None and cfg.llm.model is None


def test_nested_validation_funneled():
    with pytest.raises(InvalidValue) as ei:
        parse_config("[chunking]\nchunk_size = 10\noverlap = 10\n")
    assert ei.value.key == "chunking"
    with pytest.raises(InvalidValue) as ei:
        parse_config("[hnsw]\nm = 16\nef_construction = 8\n")
    assert ei.value.key == "hnsw"


# --- loopback guard ---------------------------------------------------------

def test_non_loopback_bind_needs_opt_in():
    with pytest.raises(InvalidValue) as ei:
        parse_config("[server]\nbind_addr = 0.0.0.0\n")
    assert ei.value.key == "server.bind_addr"
    cfg = parse_config(
        "[server]\nbind_addr = 0.0.0.0\nallow_non_loopback = true\n")
    assert cfg.server.bind_addr == "0.0.0.0"


@pytest.mark.parametrize("addr", ["127.0.0.1", "127.1.2.3", "::1",
                                  "localhost"])
def test_loopback_addresses_accepted(addr):
    cfg = parse_config(f"[server]\nbind_addr = {addr}\n")
    assert cfg.server.bind_addr == addr


# --- round trip and redaction -----------------------------------------------

def test_serialize_parse_round_trip():
    for cfg in (default_config(), parse_config(FULL)):
        assert parse_config(serialize_config(cfg)) == cfg


@given(k1=st.floats(min_value=0.0, max_value=5.0),
       b=st.floats(min_value=0.0, max_value=1.0),
       port=st.integers(min_value=1, max_value=65535),
       dim=st.integers(min_value=8, max_value=512),
       snap=st.booleans())
def test_round_trip_over_generated_configs(k1, b, port, dim, snap):
    base = default_config()
    cfg = dataclasses.replace(
        base,
        bm25=dataclasses.replace(base.bm25, k1=k1, b=b),
        embedder=dataclasses.replace(base.embedder, dim=dim),
        chunking=dataclasses.replace(base.chunking,
                                     snap_to_word_boundary=snap),
        server=dataclasses.replace(base.server, port=port),
    )
    assert parse_config(serialize_config(cfg)) == cfg


def test_redaction_omits_secret_references():
    cfg = parse_config(FULL)
    red = redacted_dict(cfg)
    blob = json.dumps(red)
    assert "api_key" not in blob
    assert "LLM_KEY" not in blob
    assert red["llm"] == {"backend": "http",
                          "endpoint": "http://localhost:9000/v1/chat",
                          "model": "small-9b"}
    assert red["server"]["port"] == 9999


def test_load_config_file(tmp_path):
    path = tmp_path / "conf.ini"
    path.write_text(FULL, encoding="utf-8")
    assert load_config(path) == parse_config(FULL)
    with pytest.raises(IoError):
        load_config(tmp_path / "missing.ini")
