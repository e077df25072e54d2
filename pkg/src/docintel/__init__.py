"""Local-first document intelligence: ingest folders into hybrid
keyword + vector stores and run retrieval-augmented pipelines (ask,
extract, summarize, classify) over them, offline by default.

The useful entry points:

    >>> from docintel import Config, Engine
    >>> eng = Engine.open_or_create(Config(store_dir="store"))
    >>> eng.ingest("docs/")
    >>> eng.ask("What does the architecture doc say about caching?")

Lower layers (SparseIndex, DenseIndex, DualIndex, the query language,
the LLM backends) are importable directly for library use.
"""

from .config import Config, default_config, load_config, serialize_config
from .dense import DenseIndex, HashEmbedder
from .dual import DualIndex, FusionParams, rrf_fuse
from .engine import Engine
from .errors import DocIntelError
from .hnsw import HnswIndex, HnswParams
from .ingest import ChunkingParams, IngestReport
from .llm import (
    ExtractionSchema,
    HttpBackend,
    PromptTemplate,
    SchemaField,
    StubBackend,
)
from .pipelines import Answer, Summary, ask, extract, split_units
from .query import parse_query, print_query
from .sparse import Bm25Params, ResultPage, SparseIndex
from .store import Store

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "Answer",
    "Bm25Params",
    "ChunkingParams",
    "Config",
    "DenseIndex",
    "DocIntelError",
    "DualIndex",
    "Engine",
    "ExtractionSchema",
    "FusionParams",
    "HashEmbedder",
    "HnswIndex",
    "HnswParams",
    "HttpBackend",
    "IngestReport",
    "PromptTemplate",
    "ResultPage",
    "SchemaField",
    "SparseIndex",
    "Store",
    "StubBackend",
    "Summary",
    "ask",
    "default_config",
    "extract",
    "load_config",
    "parse_query",
    "print_query",
    "rrf_fuse",
    "serialize_config",
    "split_units",
]
