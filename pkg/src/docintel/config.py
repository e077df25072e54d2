"""Flat sectioned key=value configuration, parsed strictly.

Grammar, line by line:

    # comment            (also allowed after values? no, full-line only)
    [section]
    key = value

Unknown sections or keys are errors, not warnings: a misspelled privacy
knob must fail loudly rather than silently default. Empty values mean
"unset" for optional string keys and are invalid elsewhere.

The defaults describe a fully offline system: stub LLM backend, hash
embedder, loopback bind. Remote anything requires an explicit endpoint.
"""

from __future__ import annotations

import ipaddress
import re
from dataclasses import dataclass, field
from pathlib import Path

from .dual import FusionParams
from .errors import ConfigParseError, InvalidValue, IoError, UnknownKey
from .hnsw import HnswParams
from .ingest import ChunkingParams
from .sparse import Bm25Params

STORE_KINDS = ("sparse", "dense", "dual")
LLM_BACKENDS = ("stub", "http")
EMBEDDER_KINDS = ("hash", "remote")

_SECTION_RE = re.compile(r"^\[([A-Za-z_][A-Za-z0-9_]*)\]$")
_KEY_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*)$")


@dataclass(frozen=True)
class LlmConfig:
    backend: str = "stub"
    endpoint: str | None = None
    model: str | None = None
    api_key_env: str | None = None


@dataclass(frozen=True)
class EmbedderConfig:
    kind: str = "hash"
    dim: int = 256
    endpoint: str | None = None
    model: str | None = None


@dataclass(frozen=True)
class ServerConfig:
    bind_addr: str = "127.0.0.1"
    port: int = 8080
    max_in_flight: int = 4
    allow_non_loopback: bool = False


@dataclass(frozen=True)
class Config:
    store_dir: str = "store"
    store_kind: str = "dual"
    chunking: ChunkingParams = field(default_factory=ChunkingParams)
    bm25: Bm25Params = field(default_factory=Bm25Params)
    hnsw: HnswParams = field(default_factory=HnswParams)
    fusion: FusionParams = field(default_factory=FusionParams)
    llm: LlmConfig = field(default_factory=LlmConfig)
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    server: ServerConfig = field(default_factory=ServerConfig)


def default_config() -> Config:
    return Config()


def _is_loopback(addr: str) -> bool:
    if addr == "localhost":
        return True
    try:
        return ipaddress.ip_address(addr).is_loopback
    except ValueError:
        return False


def _parse_lines(text: str) -> dict[str, dict[str, tuple[str, int]]]:
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    current: str | None = None
    for line_no, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _SECTION_RE.match(line)
        if m:
            current = m.group(1)
            sections.setdefault(current, {})
            continue
        m = _KEY_RE.match(line)
        if m:
            if current is None:
                raise ConfigParseError(
                    "key outside of any [section]", line_no)
            key, value = m.group(1), m.group(2).strip()
            if key in sections[current]:
                raise ConfigParseError(
                    f"duplicate key {current}.{key}", line_no)
            sections[current][key] = (value, line_no)
            continue
        raise ConfigParseError(f"cannot parse line: {line!r}", line_no)
    return sections


class _Section:
    """Typed getters over one parsed section; tracks which keys were read
    so leftovers can be rejected."""

    def __init__(self, name: str, raw: dict[str, tuple[str, int]]):
        self.name = name
        self.raw = raw
        self.taken: set[str] = set()

    def _get(self, key: str) -> tuple[str, int] | None:
        if key in self.raw:
            self.taken.add(key)
            return self.raw[key]
        return None

    def string(self, key: str, default: str) -> str:
        got = self._get(key)
        if got is None:
            return default
        value, _ = got
        if not value:
            raise InvalidValue(f"{self.name}.{key}", "must be non-empty")
        return value

    def optional(self, key: str) -> str | None:
        got = self._get(key)
        if got is None:
            return None
        value, _ = got
        return value or None

    def integer(self, key: str, default: int) -> int:
        got = self._get(key)
        if got is None:
            return default
        value, _ = got
        try:
            return int(value, 10)
        except ValueError:
            raise InvalidValue(f"{self.name}.{key}",
                               f"not an integer: {value!r}") from None

    def real(self, key: str, default: float) -> float:
        got = self._get(key)
        if got is None:
            return default
        value, _ = got
        try:
            return float(value)
        except ValueError:
            raise InvalidValue(f"{self.name}.{key}",
                               f"not a number: {value!r}") from None

    def boolean(self, key: str, default: bool) -> bool:
        got = self._get(key)
        if got is None:
            return default
        value, _ = got
        if value == "true":
            return True
        if value == "false":
            return False
        raise InvalidValue(f"{self.name}.{key}",
                           f"expected true or false, got {value!r}")

    def choice(self, key: str, default: str, allowed: tuple[str, ...]) -> str:
        value = self.string(key, default)
        if value not in allowed:
            raise InvalidValue(f"{self.name}.{key}",
                               f"must be one of {', '.join(allowed)}")
        return value

    def reject_unknown(self) -> None:
        for key in self.raw:
            if key not in self.taken:
                raise UnknownKey(f"{self.name}.{key}", self.raw[key][1])


def parse_config(text: str) -> Config:
    sections = _parse_lines(text)
    known = ("store", "chunking", "bm25", "hnsw", "fusion", "llm",
             "embedder", "server")
    for name in sections:
        if name not in known:
            first_line = min(line for _, line in sections[name].values()) \
                if sections[name] else None
            raise UnknownKey(name, first_line)

    def section(name: str) -> _Section:
        return _Section(name, sections.get(name, {}))

    store = section("store")
    store_dir = store.string("dir", "store")
    store_kind = store.choice("kind", "dual", STORE_KINDS)
    store.reject_unknown()

    ch = section("chunking")
    chunking = ChunkingParams(
        chunk_size=ch.integer("chunk_size", 500),
        overlap=ch.integer("overlap", 50),
        snap_to_word_boundary=ch.boolean("snap_to_word_boundary", True),
    )
    ch.reject_unknown()
    try:
        chunking.validate()
    except ValueError as e:
        raise InvalidValue("chunking", str(e)) from None

    bm = section("bm25")
    bm25 = Bm25Params(k1=bm.real("k1", 1.2), b=bm.real("b", 0.75))
    bm.reject_unknown()
    try:
        bm25.validate()
    except ValueError as e:
        raise InvalidValue("bm25", str(e)) from None

    hn = section("hnsw")
    hnsw = HnswParams(
        m=hn.integer("m", 16),
        ef_construction=hn.integer("ef_construction", 200),
        ef_search=hn.integer("ef_search", 50),
        rng_seed=hn.integer("rng_seed", 42),
    )
    hn.reject_unknown()
    try:
        hnsw.validate()
    except ValueError as e:
        raise InvalidValue("hnsw", str(e)) from None

    fu = section("fusion")
    fusion = FusionParams(
        method=fu.choice("method", "rrf", ("rrf",)),
        rrf_k=fu.integer("rrf_k", 60),
        k_dense=fu.integer("k_dense", 50),
        k_sparse=fu.integer("k_sparse", 50),
    )
    fu.reject_unknown()
    try:
        fusion.validate()
    except ValueError as e:
        raise InvalidValue("fusion", str(e)) from None

    lm = section("llm")
    llm = LlmConfig(
        backend=lm.choice("backend", "stub", LLM_BACKENDS),
        endpoint=lm.optional("endpoint"),
        model=lm.optional("model"),
        api_key_env=lm.optional("api_key_env"),
    )
    lm.reject_unknown()
    if llm.backend == "http" and not llm.endpoint:
        raise InvalidValue("llm.endpoint",
                           "http backend requires an explicit endpoint")

    em = section("embedder")
    embedder = EmbedderConfig(
        kind=em.choice("kind", "hash", EMBEDDER_KINDS),
        dim=em.integer("dim", 256),
        endpoint=em.optional("endpoint"),
        model=em.optional("model"),
    )
    em.reject_unknown()
    if embedder.kind == "remote" and not embedder.endpoint:
        raise InvalidValue("embedder.endpoint",
                           "remote embedder requires an explicit endpoint")
    if embedder.dim < 8:
        raise InvalidValue("embedder.dim", "must be >= 8")

    sv = section("server")
    server = ServerConfig(
        bind_addr=sv.string("bind_addr", "127.0.0.1"),
        port=sv.integer("port", 8080),
        max_in_flight=sv.integer("max_in_flight", 4),
        allow_non_loopback=sv.boolean("allow_non_loopback", False),
    )
    sv.reject_unknown()
    if not 1 <= server.port <= 65535:
        raise InvalidValue("server.port", "must be within [1, 65535]")
    if server.max_in_flight < 1:
        raise InvalidValue("server.max_in_flight", "must be >= 1")
    if not server.allow_non_loopback and not _is_loopback(server.bind_addr):
        raise InvalidValue(
            "server.bind_addr",
            "non-loopback bind requires server.allow_non_loopback = true")

    return Config(store_dir=store_dir, store_kind=store_kind,
                  chunking=chunking, bm25=bm25, hnsw=hnsw, fusion=fusion,
                  llm=llm, embedder=embedder, server=server)


def load_config(path: str | Path) -> Config:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read config {path}: {e}") from e
    return parse_config(text)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def serialize_config(cfg: Config) -> str:
    """Render a config back to the file grammar; reparsing yields an equal
    Config (round-trip property)."""
    lines = [
        "[store]",
        f"dir = {_fmt(cfg.store_dir)}",
        f"kind = {_fmt(cfg.store_kind)}",
        "",
        "[chunking]",
        f"chunk_size = {_fmt(cfg.chunking.chunk_size)}",
        f"overlap = {_fmt(cfg.chunking.overlap)}",
        f"snap_to_word_boundary = {_fmt(cfg.chunking.snap_to_word_boundary)}",
        "",
        "[bm25]",
        f"k1 = {_fmt(cfg.bm25.k1)}",
        f"b = {_fmt(cfg.bm25.b)}",
        "",
        "[hnsw]",
        f"m = {_fmt(cfg.hnsw.m)}",
        f"ef_construction = {_fmt(cfg.hnsw.ef_construction)}",
        f"ef_search = {_fmt(cfg.hnsw.ef_search)}",
        f"rng_seed = {_fmt(cfg.hnsw.rng_seed)}",
        "",
        "[fusion]",
        f"method = {_fmt(cfg.fusion.method)}",
        f"rrf_k = {_fmt(cfg.fusion.rrf_k)}",
        f"k_dense = {_fmt(cfg.fusion.k_dense)}",
        f"k_sparse = {_fmt(cfg.fusion.k_sparse)}",
        "",
        "[llm]",
        f"backend = {_fmt(cfg.llm.backend)}",
        f"endpoint = {_fmt(cfg.llm.endpoint)}",
        f"model = {_fmt(cfg.llm.model)}",
        f"api_key_env = {_fmt(cfg.llm.api_key_env)}",
        "",
        "[embedder]",
        f"kind = {_fmt(cfg.embedder.kind)}",
        f"dim = {_fmt(cfg.embedder.dim)}",
        f"endpoint = {_fmt(cfg.embedder.endpoint)}",
        f"model = {_fmt(cfg.embedder.model)}",
        "",
        "[server]",
        f"bind_addr = {_fmt(cfg.server.bind_addr)}",
        f"port = {_fmt(cfg.server.port)}",
        f"max_in_flight = {_fmt(cfg.server.max_in_flight)}",
        f"allow_non_loopback = {_fmt(cfg.server.allow_non_loopback)}",
        "",
    ]
    return "\n".join(lines)


def redacted_dict(cfg: Config) -> dict:
    """Config as a JSON-ready dict with secret-referencing keys omitted."""
    return {
        "store_dir": cfg.store_dir,
        "store_kind": cfg.store_kind,
        "chunking": {
            "chunk_size": cfg.chunking.chunk_size,
            "overlap": cfg.chunking.overlap,
            "snap_to_word_boundary": cfg.chunking.snap_to_word_boundary,
        },
        "bm25": {"k1": cfg.bm25.k1, "b": cfg.bm25.b},
        "hnsw": {
            "m": cfg.hnsw.m,
            "ef_construction": cfg.hnsw.ef_construction,
            "ef_search": cfg.hnsw.ef_search,
            "rng_seed": cfg.hnsw.rng_seed,
        },
        "fusion": {
            "method": cfg.fusion.method,
            "rrf_k": cfg.fusion.rrf_k,
            "k_dense": cfg.fusion.k_dense,
            "k_sparse": cfg.fusion.k_sparse,
        },
        "llm": {
            "backend": cfg.llm.backend,
            "endpoint": cfg.llm.endpoint,
            "model": cfg.llm.model,
        },
        "embedder": {
            "kind": cfg.embedder.kind,
            "dim": cfg.embedder.dim,
            "endpoint": cfg.embedder.endpoint,
            "model": cfg.embedder.model,
        },
        "server": {
            "bind_addr": cfg.server.bind_addr,
            "port": cfg.server.port,
            "max_in_flight": cfg.server.max_in_flight,
            "allow_non_loopback": cfg.server.allow_non_loopback,
        },
    }
