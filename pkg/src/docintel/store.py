"""Durable store directory with atomic commits and crash recovery.

Layout (dual kind; single-kind stores keep only their side):

    <store_dir>/
      manifest.json   committed file inventory; THE commit point
      sparse/         keyword index files
      dense/          vector index files
      dual.json       fusion defaults
      models/         persisted classifiers (independent of commits)
      .lock           writer lock (flock)

Mutations happen in memory; commit() writes a complete new snapshot next
to the committed one, swaps it in, and only then replaces manifest.json.
The manifest replace is a single atomic rename, so a crash at any
earlier point leaves the previous commit fully intact and recover()
can roll the directory back to it deterministically:

    phase 1   write sparse.new/ dense.new/ dual.json.new manifest.json.new
    phase 2   per side: side -> side.stale, side.new -> side
    commit    os.replace(manifest.json.new, manifest.json)
    cleanup   remove side.stale

recover() runs on every open: a leftover manifest.json.new means the
commit never landed, so stale sides are renamed back and new ones
discarded; without it, leftover .new/.stale debris is deleted forward.
"""

from __future__ import annotations

import errno
import fcntl
import json
import os
import shutil
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .dense import DenseIndex, make_embedder
from .dual import DualIndex, FusionParams
from .errors import CorruptStore, IngestInProgress, IoError
from .hnsw import HnswParams
from .ingest import ChunkingParams, IngestReport, ingest_folder
from .sparse import Bm25Params, SparseIndex

FORMAT_VERSION = 1

_SIDE_NAMES = ("sparse", "dense", "dual.json")


@dataclass
class FileEntry:
    sha256: str
    mtime: int
    chunk_count: int


class Manifest:
    def __init__(self, store_kind: str, created_at: str,
                 embedder_info: dict | None,
                 files: dict[str, FileEntry] | None = None):
        self.store_kind = store_kind
        self.created_at = created_at
        self.embedder_info = embedder_info or {}
        self.files: dict[str, FileEntry] = files or {}

    def record_file(self, source_path: str, sha256: str, mtime: int,
                    chunk_count: int) -> None:
        self.files[source_path] = FileEntry(sha256, mtime, chunk_count)

    def remove_file(self, source_path: str) -> None:
        self.files.pop(source_path, None)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "store_kind": self.store_kind,
            "created_at": self.created_at,
            "embedder": self.embedder_info,
            "files": [
                {"source_path": sp, "sha256": e.sha256, "mtime": e.mtime,
                 "chunk_count": e.chunk_count}
                for sp, e in sorted(self.files.items())
            ],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Manifest":
        if raw.get("format_version") != FORMAT_VERSION:
            raise CorruptStore(
                f"unsupported manifest version: {raw.get('format_version')!r}")
        files: dict[str, FileEntry] = {}
        for rec in raw.get("files", []):
            sp = rec["source_path"]
            if sp in files:
                raise CorruptStore(f"duplicate manifest entry: {sp}")
            files[sp] = FileEntry(rec["sha256"], rec["mtime"],
                                  rec["chunk_count"])
        return cls(store_kind=raw.get("store_kind", "dual"),
                   created_at=raw.get("created_at", ""),
                   embedder_info=raw.get("embedder") or {},
                   files=files)


def _fsync_path(path: Path) -> None:
    fd = os.open(path, os.O_RDONLY)
    try:
        os.fsync(fd)
    finally:
        os.close(fd)


def _fsync_tree(path: Path) -> None:
    if path.is_dir():
        for child in path.iterdir():
            _fsync_tree(child)
    _fsync_path(path)


def _remove(path: Path) -> None:
    if path.is_dir():
        shutil.rmtree(path)
    elif path.exists():
        path.unlink()


def recover(store_dir: str | Path) -> None:
    """Restore commit-protocol invariants after a crash. Idempotent."""
    d = Path(store_dir)
    manifest_new = d / "manifest.json.new"
    if manifest_new.exists():
        # Uncommitted transaction: roll back to the previous commit.
        for side in _SIDE_NAMES:
            cur, new = d / side, d / f"{side}.new"
            stale = d / f"{side}.stale"
            if stale.exists():
                _remove(cur)
                os.rename(stale, cur)
            _remove(new)
        manifest_new.unlink()
    else:
        # Either a clean state or a crash after the commit point.
        for side in _SIDE_NAMES:
            _remove(d / f"{side}.new")
            _remove(d / f"{side}.stale")
    _fsync_path(d)


class Store:
    """One store directory held in memory with explicit commits."""

    def __init__(self, store_dir: Path, kind: str, index,
                 manifest: Manifest, chunking: ChunkingParams):
        self.dir = Path(store_dir)
        self.kind = kind
        self.index = index
        self.manifest = manifest
        self.chunking = chunking
        self._lock_handle = None

    # --- construction -------------------------------------------------------

    @staticmethod
    def _build_index(kind: str, bm25: Bm25Params | None,
                     hnsw: HnswParams | None, fusion: FusionParams | None,
                     embedder):
        if kind == "sparse":
            return SparseIndex(bm25)
        dim = embedder.dim if embedder is not None else 256
        if kind == "dense":
            return DenseIndex(dim, hnsw, embedder)
        if kind == "dual":
            return DualIndex(SparseIndex(bm25),
                             DenseIndex(dim, hnsw, embedder), fusion)
        raise ValueError(f"unknown store kind: {kind}")

    @classmethod
    def create(cls, store_dir: str | Path, kind: str = "dual",
               chunking: ChunkingParams | None = None,
               bm25: Bm25Params | None = None,
               hnsw: HnswParams | None = None,
               fusion: FusionParams | None = None,
               embedder=None) -> "Store":
        d = Path(store_dir)
        if (d / "manifest.json").exists():
            raise IoError(f"store already exists: {d}")
        d.mkdir(parents=True, exist_ok=True)
        if embedder is None and kind in ("dense", "dual"):
            embedder = make_embedder("hash", 256)
        index = cls._build_index(kind, bm25, hnsw, fusion, embedder)
        info = {}
        if embedder is not None and kind in ("dense", "dual"):
            info = embedder.describe() if hasattr(embedder, "describe") else {}
        manifest = Manifest(
            store_kind=kind,
            created_at=datetime.now(timezone.utc).isoformat(),
            embedder_info=info,
        )
        store = cls(d, kind, index, manifest, chunking or ChunkingParams())
        store.commit()
        return store

    @classmethod
    def open(cls, store_dir: str | Path,
             chunking: ChunkingParams | None = None,
             embedder=None) -> "Store":
        d = Path(store_dir)
        if not d.is_dir():
            raise IoError(f"not a store directory: {d}")
        recover(d)
        manifest_path = d / "manifest.json"
        if not manifest_path.exists():
            raise IoError(f"no manifest.json in {d}; not an initialized store")
        try:
            manifest = Manifest.from_dict(
                json.loads(manifest_path.read_text(encoding="utf-8")))
        except ValueError as e:
            raise CorruptStore(f"cannot parse manifest.json: {e}") from e
        kind = manifest.store_kind
        if kind == "sparse":
            index = SparseIndex.load(d / "sparse")
        elif kind == "dense":
            index = DenseIndex.load(d / "dense", embedder=embedder)
        elif kind == "dual":
            index = DualIndex.load(d, embedder=embedder)
        else:
            raise CorruptStore(f"unknown store kind in manifest: {kind}")
        return cls(d, kind, index, manifest, chunking or ChunkingParams())

    @classmethod
    def open_or_create(cls, store_dir: str | Path, kind: str = "dual",
                       chunking: ChunkingParams | None = None,
                       bm25: Bm25Params | None = None,
                       hnsw: HnswParams | None = None,
                       fusion: FusionParams | None = None,
                       embedder=None) -> "Store":
        d = Path(store_dir)
        if (d / "manifest.json").exists() or (d / "manifest.json.new").exists():
            recover(d)
            if (d / "manifest.json").exists():
                return cls.open(d, chunking=chunking, embedder=embedder)
        return cls.create(d, kind, chunking=chunking, bm25=bm25, hnsw=hnsw,
                          fusion=fusion, embedder=embedder)

    # --- sink protocol (used by ingest_folder) ------------------------------

    def add_chunk(self, chunk) -> None:
        self.index.add_chunk(chunk)

    def delete_by_source(self, source_path: str) -> int:
        n = self.index.delete_by_source(source_path)
        self.manifest.remove_file(source_path)
        return n

    # --- write locking ------------------------------------------------------

    def acquire_writer(self) -> None:
        handle = open(self.dir / ".lock", "w")
        try:
            fcntl.flock(handle.fileno(), fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError as e:
            handle.close()
            if e.errno in (errno.EACCES, errno.EAGAIN):
                raise IngestInProgress(
                    "another process is writing this store") from e
            raise
        self._lock_handle = handle

    def release_writer(self) -> None:
        if self._lock_handle is not None:
            fcntl.flock(self._lock_handle.fileno(), fcntl.LOCK_UN)
            self._lock_handle.close()
            self._lock_handle = None

    # --- ingest -------------------------------------------------------------

    def ingest(self, root: str | Path,
               params: ChunkingParams | None = None) -> IngestReport:
        """Ingest a folder and commit. Holds the writer lock throughout;
        a crash before the commit point leaves the prior snapshot."""
        self.acquire_writer()
        try:
            report = ingest_folder(root, self, params or self.chunking)
            self.commit()
            return report
        finally:
            self.release_writer()

    # --- commit -------------------------------------------------------------

    def _save_sides(self) -> list[str]:
        """Phase 1: write the full new snapshot as .new entries."""
        sides: list[str] = []
        if self.kind == "sparse":
            self.index.save(self.dir / "sparse.new")
            sides.append("sparse")
        elif self.kind == "dense":
            self.index.save(self.dir / "dense.new")
            sides.append("dense")
        else:
            self.index.sparse.save(self.dir / "sparse.new")
            self.index.dense.save(self.dir / "dense.new")
            with open(self.dir / "dual.json.new", "w", encoding="utf-8") as f:
                json.dump({
                    "format_version": FORMAT_VERSION,
                    "fusion": {
                        "method": self.index.fusion.method,
                        "rrf_k": self.index.fusion.rrf_k,
                        "k_dense": self.index.fusion.k_dense,
                        "k_sparse": self.index.fusion.k_sparse,
                    },
                }, f, indent=2)
                f.write("\n")
            sides += ["sparse", "dense", "dual.json"]
        for side in sides:
            _fsync_tree(self.dir / f"{side}.new")
        return sides

    def commit(self) -> None:
        d = self.dir
        sides = self._save_sides()
        with open(d / "manifest.json.new", "w", encoding="utf-8") as f:
            json.dump(self.manifest.to_dict(), f, indent=2)
            f.write("\n")
            f.flush()
            os.fsync(f.fileno())
        _fsync_path(d)
        # Phase 2: swap each side; the old snapshot survives as .stale
        # until the manifest replace makes the new one current.
        for side in sides:
            cur, new = d / side, d / f"{side}.new"
            stale = d / f"{side}.stale"
            if cur.exists():
                os.rename(cur, stale)
            os.rename(new, cur)
        _fsync_path(d)
        os.replace(d / "manifest.json.new", d / "manifest.json")
        _fsync_path(d)
        for side in sides:
            _remove(d / f"{side}.stale")

    # --- misc ---------------------------------------------------------------

    @property
    def models_dir(self) -> Path:
        p = self.dir / "models"
        p.mkdir(parents=True, exist_ok=True)
        return p

    @property
    def chunk_count(self) -> int:
        if self.kind == "sparse":
            return self.index.doc_count
        return self.index.chunk_count

    def close(self) -> None:
        self.release_writer()
        if hasattr(self.index, "close"):
            self.index.close()
