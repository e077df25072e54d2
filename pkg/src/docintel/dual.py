"""Parallel keyword + vector store with reciprocal-rank-fused ranking.

Both sides index every chunk (the dense side parks zero-vector chunks in
its unembeddable list). Writes are two-phase: sparse first, then dense,
with the sparse write rolled back if the dense one fails, so a chunk is
either in both sides or in neither.

Query syntax is an asymmetry by design: boolean/field/phrase operators
apply to the sparse side only, while the dense side embeds the raw query
text as-is.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .dense import DenseIndex
from .errors import (
    CorruptStore,
    DuplicateChunk,
    EmptyIndex,
    EmptyQuery,
    PartialWriteRollback,
)
from .sparse import SparseIndex

FORMAT_VERSION = 1


@dataclass(frozen=True)
class FusionParams:
    method: str = "rrf"
    rrf_k: int = 60
    k_dense: int = 50
    k_sparse: int = 50

    def validate(self) -> None:
        if self.method != "rrf":
            raise ValueError(f"unknown fusion method: {self.method}")
        if self.rrf_k < 1:
            raise ValueError("rrf_k must be >= 1")
        if self.k_dense < 1 or self.k_sparse < 1:
            raise ValueError("per-side candidate counts must be >= 1")


@dataclass(frozen=True)
class FusedHit:
    chunk_id: str
    fused_score: float
    sparse_rank: int | None
    dense_rank: int | None
    source_path: str
    text: str
    seq: int


def rrf_fuse(sparse_ids: list[str], dense_ids: list[str],
             rrf_k: int = 60) -> list[tuple[str, float, int | None, int | None]]:
    """Fuse two ranked id lists: score = sum of 1/(rrf_k + rank), rank 1-based.

    Returns (chunk_id, fused_score, sparse_rank, dense_rank) sorted by
    score descending, ties by chunk_id ascending. Pure function so tests
    can compare it against direct recomputation.
    """
    sparse_rank = {cid: r for r, cid in enumerate(sparse_ids, start=1)}
    dense_rank = {cid: r for r, cid in enumerate(dense_ids, start=1)}
    fused = []
    for cid in set(sparse_rank) | set(dense_rank):
        score = 0.0
        sr = sparse_rank.get(cid)
        dr = dense_rank.get(cid)
        if sr is not None:
            score += 1.0 / (rrf_k + sr)
        if dr is not None:
            score += 1.0 / (rrf_k + dr)
        fused.append((cid, score, sr, dr))
    fused.sort(key=lambda row: (-row[1], row[0]))
    return fused


class DualIndex:
    def __init__(self, sparse: SparseIndex | None = None,
                 dense: DenseIndex | None = None,
                 fusion: FusionParams | None = None):
        self.sparse = sparse if sparse is not None else SparseIndex()
        self.dense = dense if dense is not None else DenseIndex()
        self.fusion = fusion or FusionParams()
        self.fusion.validate()
        self.inconsistent = False

    def close(self) -> None:
        self.sparse.close()
        self.dense.close()

    # --- mutation -----------------------------------------------------------

    def add_chunk(self, chunk) -> None:
        if (chunk.chunk_id in self.sparse.by_chunk_id
                or chunk.chunk_id in self.dense.by_chunk_id
                or chunk.chunk_id in self.dense.unembeddable):
            raise DuplicateChunk(f"chunk already indexed: {chunk.chunk_id}")
        self.sparse.add_chunk(chunk)
        try:
            self.dense.add_chunk(chunk)
        except Exception as dense_err:
            try:
                self.sparse.delete(chunk.chunk_id)
            except Exception as rollback_err:
                self.inconsistent = True
                raise PartialWriteRollback(
                    f"dense add failed ({dense_err}) and sparse rollback "
                    f"failed ({rollback_err}); store flagged inconsistent"
                ) from dense_err
            raise

    def delete(self, chunk_id: str) -> None:
        self.sparse.delete(chunk_id)
        self.dense.delete(chunk_id)

    def delete_by_source(self, source_path: str) -> int:
        n = self.sparse.delete_by_source(source_path)
        self.dense.delete_by_source(source_path)
        self.dense.maybe_rebuild()
        return n

    def document_text(self, source_path: str) -> str:
        return self.sparse.document_text(source_path)

    @property
    def chunk_count(self) -> int:
        return self.sparse.doc_count

    # --- queries ------------------------------------------------------------

    def hybrid_search(self, query_text: str, k: int = 10,
                      params: FusionParams | None = None) -> list[FusedHit]:
        p = params or self.fusion
        p.validate()
        if not query_text.strip():
            raise EmptyQuery("query is blank")
        sparse_hits = self.sparse.search(query_text, p.k_sparse)
        try:
            dense_hits = self.dense.search(query_text, p.k_dense)
        except (EmptyIndex, EmptyQuery):
            # Field-only queries embed to nothing, and a store whose every
            # chunk was unembeddable has no graph; the sparse side still
            # answers alone.
            dense_hits = []
        fused = rrf_fuse([h.chunk_id for h in sparse_hits],
                         [h.chunk_id for h in dense_hits], p.rrf_k)
        out = []
        for cid, score, sr, dr in fused[:k]:
            ref = self.sparse.by_chunk_id.get(cid)
            if ref is not None:
                sc = self.sparse.stored[ref]
                out.append(FusedHit(cid, score, sr, dr,
                                    sc.source_path, sc.text, sc.seq))
            else:
                nid = self.dense.by_chunk_id[cid]
                ci = self.dense.info[nid]
                out.append(FusedHit(cid, score, sr, dr,
                                    ci.source_path, ci.text, ci.seq))
        return out

    # --- persistence --------------------------------------------------------

    def save(self, dirpath: str | Path) -> None:
        d = Path(dirpath)
        d.mkdir(parents=True, exist_ok=True)
        self.sparse.save(d / "sparse")
        self.dense.save(d / "dense")
        with open(d / "dual.json", "w", encoding="utf-8") as f:
            json.dump({
                "format_version": FORMAT_VERSION,
                "fusion": {
                    "method": self.fusion.method,
                    "rrf_k": self.fusion.rrf_k,
                    "k_dense": self.fusion.k_dense,
                    "k_sparse": self.fusion.k_sparse,
                },
            }, f, indent=2)
            f.write("\n")

    @classmethod
    def load(cls, dirpath: str | Path, embedder=None) -> "DualIndex":
        d = Path(dirpath)
        try:
            meta = json.loads((d / "dual.json").read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            raise CorruptStore(f"cannot read dual.json: {e}") from e
        if meta.get("format_version") != FORMAT_VERSION:
            raise CorruptStore(
                f"unsupported format_version: {meta.get('format_version')!r}")
        raw = meta.get("fusion") or {}
        fusion = FusionParams(
            method=raw.get("method", "rrf"),
            rrf_k=raw.get("rrf_k", 60),
            k_dense=raw.get("k_dense", 50),
            k_sparse=raw.get("k_sparse", 50),
        )
        sparse = SparseIndex.load(d / "sparse")
        dense = DenseIndex.load(d / "dense", embedder=embedder)
        return cls(sparse, dense, fusion)
