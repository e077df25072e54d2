"""Dense side: text embedders and the vector index built on the graph.

The hash embedder is fully offline: FNV-1a over each analyzed term picks
a bucket and a sign, term counts accumulate, and the result is L2
normalized. It is deliberately cheap; its job is to give cosine geometry
a deterministic, dependency-free backing so the dense path works without
any model server.

On-disk layout of a dense index directory:

    vectors.dat  "DVEC", u32 version, u32 dim, u64 count,
                 count * (u64 id + dim float32), little-endian
    graph.dat    the navigable-graph topology (see hnsw)
    idmap.json   id <-> chunk metadata, plus chunks that embedded to zero
    meta.json    {"dim", "embedder", "rng_seed", "format_version"}

Vectors round-trip bit for bit: whatever float32 array went in comes
back out of load() unchanged.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import terms_of
from .errors import (
    CorruptStore,
    DimensionMismatch,
    DuplicateChunk,
    EmptyQuery,
    StoreClosed,
    UnknownChunk,
    UnknownSource,
)
from .hnsw import HnswIndex, HnswParams
from .sparse import Hit

FNV_OFFSET = 14695981039346656037
FNV_PRIME = 1099511628211
_MASK64 = (1 << 64) - 1

DEFAULT_DIM = 256
REBUILD_THRESHOLD = 0.2

VEC_MAGIC = b"DVEC"
FORMAT_VERSION = 1


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


class HashEmbedder:
    kind = "hash"

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        """Signed-bucket term counts, L2 normalized. Empty text -> zeros."""
        vec = np.zeros(self.dim, dtype=np.float64)
        for term in terms_of(text):
            h = fnv1a64(term.encode("utf-8"))
            sign = -1.0 if (h >> 63) & 1 else 1.0
            vec[h % self.dim] += sign
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            return np.zeros(self.dim, dtype=np.float32)
        return (vec / norm).astype(np.float32)

    def describe(self) -> dict:
        return {"kind": "hash", "dim": self.dim}


@dataclass(frozen=True)
class ChunkInfo:
    """Metadata carried alongside a vector (or an unembeddable chunk)."""

    chunk_id: str
    source_path: str
    text: str
    seq: int
    start_offset: int = 0
    end_offset: int = 0


def make_embedder(kind: str, dim: int, model: str | None = None,
                  endpoint: str | None = None,
                  api_key_env: str | None = None):
    if kind == "hash":
        return HashEmbedder(dim)
    if kind == "remote":
        from .llm import RemoteEmbedder
        if not endpoint:
            raise ValueError("remote embedder requires an endpoint")
        return RemoteEmbedder(endpoint=endpoint, model=model or "",
                              dim=dim, api_key_env=api_key_env)
    raise ValueError(f"unknown embedder kind: {kind}")


class DenseIndex:
    def __init__(self, dim: int = DEFAULT_DIM,
                 params: HnswParams | None = None,
                 embedder=None):
        self.embedder = embedder if embedder is not None else HashEmbedder(dim)
        if self.embedder.dim != dim:
            raise DimensionMismatch(
                f"embedder dim {self.embedder.dim} != index dim {dim}")
        self.dim = dim
        self.graph = HnswIndex(dim, params)
        self.next_id = 0
        self.by_chunk_id: dict[str, int] = {}
        self.info: dict[int, ChunkInfo] = {}
        # chunks that embedded to the zero vector; stored but not in the graph
        self.unembeddable: dict[str, ChunkInfo] = {}
        self.closed = False

    def close(self) -> None:
        self.closed = True

    def _check_open(self) -> None:
        if self.closed:
            raise StoreClosed("index is closed")

    # --- mutation -----------------------------------------------------------

    def add_chunk(self, chunk) -> None:
        self._check_open()
        if chunk.chunk_id in self.by_chunk_id or chunk.chunk_id in self.unembeddable:
            raise DuplicateChunk(f"chunk already indexed: {chunk.chunk_id}")
        ci = ChunkInfo(
            chunk_id=chunk.chunk_id,
            source_path=chunk.source_path,
            text=chunk.text,
            seq=chunk.seq,
            start_offset=getattr(chunk, "start_offset", 0),
            end_offset=getattr(chunk, "end_offset", 0),
        )
        vec = self.embedder.embed(chunk.text)
        if float(np.linalg.norm(vec)) == 0.0:
            self.unembeddable[chunk.chunk_id] = ci
            return
        self._insert(ci, vec)

    def add_vector(self, chunk_id: str, vec: np.ndarray,
                   source_path: str = "", text: str = "",
                   seq: int = 0) -> None:
        self._check_open()
        self._insert(ChunkInfo(chunk_id, source_path, text, seq), vec)

    def _insert(self, ci: ChunkInfo, vec: np.ndarray) -> None:
        if ci.chunk_id in self.by_chunk_id or ci.chunk_id in self.unembeddable:
            raise DuplicateChunk(f"chunk already indexed: {ci.chunk_id}")
        nid = self.next_id
        self.graph.add(nid, vec)
        self.next_id += 1
        self.by_chunk_id[ci.chunk_id] = nid
        self.info[nid] = ci

    def delete(self, chunk_id: str) -> None:
        self._check_open()
        if chunk_id in self.unembeddable:
            del self.unembeddable[chunk_id]
            return
        if chunk_id not in self.by_chunk_id:
            raise UnknownChunk(f"no such chunk: {chunk_id}")
        nid = self.by_chunk_id.pop(chunk_id)
        self.graph.delete(nid)
        del self.info[nid]

    def delete_by_source(self, source_path: str) -> int:
        ids = [ci.chunk_id for ci in self.info.values()
               if ci.source_path == source_path]
        ids += [ci.chunk_id for ci in self.unembeddable.values()
                if ci.source_path == source_path]
        for cid in ids:
            self.delete(cid)
        return len(ids)

    def document_text(self, source_path: str) -> str:
        """Reconstruct a source's normalized text from its stored chunks."""
        chunks = sorted(
            (ci for ci in list(self.info.values())
             + list(self.unembeddable.values())
             if ci.source_path == source_path),
            key=lambda ci: ci.seq,
        )
        if not chunks:
            raise UnknownSource(f"no ingested source {source_path!r}")
        parts: list[str] = []
        prev_end = 0
        for ci in chunks:
            skip = max(0, prev_end - ci.start_offset)
            parts.append(ci.text[skip:])
            prev_end = max(prev_end, ci.end_offset)
        return "".join(parts)

    def maybe_rebuild(self) -> bool:
        """Rebuild the graph when tombstones exceed the threshold."""
        if self.graph.dead_fraction > REBUILD_THRESHOLD:
            self.graph.rebuild()
            return True
        return False

    # --- queries ------------------------------------------------------------

    @property
    def chunk_count(self) -> int:
        return len(self.by_chunk_id) + len(self.unembeddable)

    def search(self, query_text: str, k: int = 10) -> list[Hit]:
        vec = self.embedder.embed(query_text)
        if float(np.linalg.norm(vec)) == 0.0:
            raise EmptyQuery("query has no indexable terms")
        return self.search_vector(vec, k)

    def search_vector(self, vec: np.ndarray, k: int = 10) -> list[Hit]:
        found = self.graph.search(vec, k)
        out = []
        for nid, sim in found:
            ci = self.info[nid]
            out.append(Hit(ci.chunk_id, sim, ci.source_path, ci.text, ci.seq))
        return out

    # --- persistence --------------------------------------------------------

    def save(self, dirpath: str | Path) -> None:
        d = Path(dirpath)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "vectors.dat", "wb") as f:
            f.write(VEC_MAGIC)
            f.write(struct.pack("<II", FORMAT_VERSION, self.dim))
            f.write(struct.pack("<Q", len(self.graph.vectors)))
            for nid in sorted(self.graph.vectors):
                f.write(struct.pack("<Q", nid))
                f.write(self.graph.vectors[nid].astype("<f4").tobytes())
        self.graph.save(d / "graph.dat")
        entries = [
            {"id": nid, "chunk_id": ci.chunk_id,
             "source_path": ci.source_path, "text": ci.text, "seq": ci.seq,
             "start_offset": ci.start_offset, "end_offset": ci.end_offset}
            for nid, ci in sorted(self.info.items())
        ]
        # Tombstoned graph nodes keep their idmap rows only while live
        # metadata exists; info drops on delete, so re-derive from graph.
        dead_rows = [
            {"id": nid} for nid in sorted(self.graph.deleted)
        ]
        unemb = [
            {"chunk_id": ci.chunk_id, "source_path": ci.source_path,
             "text": ci.text, "seq": ci.seq,
             "start_offset": ci.start_offset, "end_offset": ci.end_offset}
            for ci in sorted(self.unembeddable.values(),
                             key=lambda c: c.chunk_id)
        ]
        with open(d / "idmap.json", "w", encoding="utf-8") as f:
            json.dump({
                "next_id": self.next_id,
                "entries": entries,
                "tombstones": dead_rows,
                "unembeddable": unemb,
            }, f, ensure_ascii=False, indent=2)
            f.write("\n")
        with open(d / "meta.json", "w", encoding="utf-8") as f:
            json.dump({
                "dim": self.dim,
                "embedder": self.embedder.describe(),
                "rng_seed": self.graph.params.rng_seed,
                "format_version": FORMAT_VERSION,
            }, f, indent=2)
            f.write("\n")

    @classmethod
    def load(cls, dirpath: str | Path, embedder=None,
             endpoint: str | None = None,
             api_key_env: str | None = None) -> "DenseIndex":
        d = Path(dirpath)
        try:
            meta = json.loads((d / "meta.json").read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            raise CorruptStore(f"cannot read meta.json: {e}") from e
        if meta.get("format_version") != FORMAT_VERSION:
            raise CorruptStore(
                f"unsupported format_version: {meta.get('format_version')!r}")
        dim = meta.get("dim")
        if not isinstance(dim, int) or dim < 1:
            raise CorruptStore(f"bad dim in meta.json: {dim!r}")
        if embedder is None:
            desc = meta.get("embedder") or {}
            kind = desc.get("kind", "hash")
            embedder = make_embedder(
                kind, desc.get("dim", dim), model=desc.get("model"),
                endpoint=desc.get("endpoint") or endpoint,
                api_key_env=api_key_env)

        try:
            blob = (d / "vectors.dat").read_bytes()
        except OSError as e:
            raise CorruptStore(f"cannot read vectors.dat: {e}") from e
        try:
            if blob[:4] != VEC_MAGIC:
                raise CorruptStore("bad vector file magic", offset=0)
            version, file_dim = struct.unpack_from("<II", blob, 4)
            if version != FORMAT_VERSION:
                raise CorruptStore(f"unsupported vector version {version}")
            if file_dim != dim:
                raise CorruptStore(
                    f"vector dim {file_dim} != meta dim {dim}")
            (count,) = struct.unpack_from("<Q", blob, 12)
            pos = 20
            vectors: dict[int, np.ndarray] = {}
            row = 4 * dim
            for _ in range(count):
                (nid,) = struct.unpack_from("<Q", blob, pos)
                pos += 8
                if pos + row > len(blob):
                    raise CorruptStore("truncated vectors.dat", offset=pos)
                vec = np.frombuffer(blob[pos:pos + row], dtype="<f4").copy()
                pos += row
                if nid in vectors:
                    raise CorruptStore(f"duplicate vector id {nid}")
                vectors[nid] = vec
        except struct.error as e:
            raise CorruptStore(f"truncated vectors.dat: {e}") from e

        idx = cls.__new__(cls)
        idx.closed = False
        idx.embedder = embedder
        if embedder.dim != dim:
            raise DimensionMismatch(
                f"embedder dim {embedder.dim} != index dim {dim}")
        idx.dim = dim
        idx.graph = HnswIndex.load(d / "graph.dat", dim, vectors)
        try:
            idmap = json.loads((d / "idmap.json").read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            raise CorruptStore(f"cannot read idmap.json: {e}") from e
        idx.by_chunk_id = {}
        idx.info = {}
        idx.unembeddable = {}
        for rec in idmap.get("entries", []):
            try:
                nid = rec["id"]
                cid = rec["chunk_id"]
                idx.by_chunk_id[cid] = nid
                idx.info[nid] = ChunkInfo(
                    cid, rec.get("source_path", ""), rec.get("text", ""),
                    rec.get("seq", 0), rec.get("start_offset", 0),
                    rec.get("end_offset", 0))
            except (KeyError, TypeError) as e:
                raise CorruptStore(f"bad idmap entry: {e}") from e
            if nid not in idx.graph.vectors:
                raise CorruptStore(f"idmap entry {nid} has no vector")
        for rec in idmap.get("unembeddable", []):
            try:
                idx.unembeddable[rec["chunk_id"]] = ChunkInfo(
                    rec["chunk_id"], rec.get("source_path", ""),
                    rec.get("text", ""), rec.get("seq", 0),
                    rec.get("start_offset", 0), rec.get("end_offset", 0))
            except (KeyError, TypeError) as e:
                raise CorruptStore(f"bad unembeddable entry: {e}") from e
        idx.next_id = idmap.get("next_id", max(vectors, default=-1) + 1)
        live = set(idx.graph.vectors) - idx.graph.deleted
        if set(idx.info) != live:
            raise CorruptStore("idmap entries do not match live graph nodes")
        return idx
