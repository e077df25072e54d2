"""Navigable small-world graph over cosine similarity, built incrementally.

Layered greedy search: descend from the top layer one closest node at a
time, then widen to a beam at the bottom. New nodes draw their top layer
from a geometric-ish distribution, floor(-ln(U) / ln(M)), using a seeded
`random.Random` so a given insertion order reproduces the same graph
bit for bit.

Neighbor selection is plain closest-M by distance. Each node keeps at
most M links per layer, 2M on layer 0; when a link push overflows a
node's list it is pruned back to the closest cap.

Deletes are tombstones: the node stays in the graph as a waypoint but is
filtered from results. Callers holding >20% tombstones should rebuild().

Distances are 1 - cosine. Vectors are stored as handed in (float32);
normalized copies back the dot products.
"""

from __future__ import annotations

import heapq
import math
import random
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateId,
    EmptyIndex,
    UnknownChunk,
    ZeroVector,
)

MAGIC = b"HNSW"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class HnswParams:
    m: int = 16
    ef_construction: int = 200
    ef_search: int = 50
    rng_seed: int = 42

    def validate(self) -> None:
        if self.m < 2:
            raise ValueError("m must be >= 2")
        if self.ef_construction < self.m:
            raise ValueError("ef_construction must be >= m")
        if self.ef_search < 1:
            raise ValueError("ef_search must be >= 1")

    @property
    def level_mult(self) -> float:
        return 1.0 / math.log(self.m)


def _normalize(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ZeroVector("cannot index a zero vector")
    return (vec / norm).astype(np.float32)


class HnswIndex:
    def __init__(self, dim: int, params: HnswParams | None = None):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.params = params or HnswParams()
        self.params.validate()
        self.ml = 1.0 / math.log(self.params.m)
        self.rng = random.Random(self.params.rng_seed)
        self.rng_draws = 0
        self.vectors: dict[int, np.ndarray] = {}
        self.normed: dict[int, np.ndarray] = {}
        self.links: dict[int, list[list[int]]] = {}
        self.deleted: set[int] = set()
        self.entry: int | None = None

    # --- introspection ------------------------------------------------------

    def __len__(self) -> int:
        return len(self.vectors)

    @property
    def live_count(self) -> int:
        return len(self.vectors) - len(self.deleted)

    @property
    def dead_fraction(self) -> float:
        if not self.vectors:
            return 0.0
        return len(self.deleted) / len(self.vectors)

    def max_layer_of(self, node_id: int) -> int:
        return len(self.links[node_id]) - 1

    def neighbors(self, node_id: int, layer: int) -> list[int]:
        return list(self.links[node_id][layer])

    def _cap(self, layer: int) -> int:
        return 2 * self.params.m if layer == 0 else self.params.m

    # --- distance -----------------------------------------------------------

    def _dist(self, q: np.ndarray, node_id: int) -> float:
        return 1.0 - float(q @ self.normed[node_id])

    # --- construction -------------------------------------------------------

    def _draw_level(self) -> int:
        u = 1.0 - self.rng.random()   # (0, 1]; avoids ln(0)
        self.rng_draws += 1
        return int(math.floor(-math.log(u) * self.ml))

    def add(self, node_id: int, vec: np.ndarray) -> None:
        if node_id in self.vectors:
            raise DuplicateId(f"id already indexed: {node_id}")
        arr = np.asarray(vec, dtype=np.float32)
        if arr.shape != (self.dim,):
            raise DimensionMismatch(
                f"expected shape ({self.dim},), got {arr.shape}")
        normed = _normalize(arr)
        level = self._draw_level()
        self.vectors[node_id] = arr
        self.normed[node_id] = normed
        self.links[node_id] = [[] for _ in range(level + 1)]
        if self.entry is None:
            self.entry = node_id
            return
        ep = [self.entry]
        top = self.max_layer_of(self.entry)
        for layer in range(top, level, -1):
            nearest = self._search_layer(normed, ep, 1, layer)
            ep = [nearest[0][1]]
        for layer in range(min(top, level), -1, -1):
            found = self._search_layer(
                normed, ep, self.params.ef_construction, layer)
            selected = [nid for _, nid in found[:self.params.m]]
            self.links[node_id][layer] = list(selected)
            for nb in selected:
                nb_links = self.links[nb][layer]
                nb_links.append(node_id)
                cap = self._cap(layer)
                if len(nb_links) > cap:
                    nbv = self.normed[nb]
                    ranked = sorted(
                        (1.0 - float(nbv @ self.normed[x]), x)
                        for x in nb_links
                    )
                    self.links[nb][layer] = [x for _, x in ranked[:cap]]
            ep = [nid for _, nid in found]
        if level > top:
            self.entry = node_id

    def _search_layer(self, q: np.ndarray, entry_points: list[int],
                      ef: int, layer: int) -> list[tuple[float, int]]:
        """Beam search one layer; returns (dist, id) ascending, len <= ef."""
        visited = set(entry_points)
        candidates: list[tuple[float, int]] = []
        worst: list[tuple[float, int]] = []    # max-heap via (-dist, -id)
        for e in entry_points:
            d = self._dist(q, e)
            heapq.heappush(candidates, (d, e))
            heapq.heappush(worst, (-d, -e))
        while candidates:
            d, c = heapq.heappop(candidates)
            if len(worst) >= ef and d > -worst[0][0]:
                break
            for nb in self.links[c][layer] if layer < len(self.links[c]) else []:
                if nb in visited:
                    continue
                visited.add(nb)
                dn = self._dist(q, nb)
                if len(worst) < ef or dn < -worst[0][0]:
                    heapq.heappush(candidates, (dn, nb))
                    heapq.heappush(worst, (-dn, -nb))
                    if len(worst) > ef:
                        heapq.heappop(worst)
        return sorted((-nd, -nid) for nd, nid in worst)

    # --- queries ------------------------------------------------------------

    def search(self, vec: np.ndarray, k: int,
               ef: int | None = None) -> list[tuple[int, float]]:
        """k nearest live nodes as (id, cosine similarity), best first.

        Ties break toward the smaller id. When k reaches the live node
        count the scan is exact rather than graph-guided.
        """
        if self.live_count == 0:
            raise EmptyIndex("no live vectors")
        arr = np.asarray(vec, dtype=np.float32)
        if arr.shape != (self.dim,):
            raise DimensionMismatch(
                f"expected shape ({self.dim},), got {arr.shape}")
        q = _normalize(arr)
        if k >= self.live_count:
            return self._exact(q, self.live_count)
        ep = [self.entry]
        top = self.max_layer_of(self.entry)
        for layer in range(top, 0, -1):
            nearest = self._search_layer(q, ep, 1, layer)
            ep = [nearest[0][1]]
        # Tombstones occupy beam slots, so widen by their count.
        ef0 = max(ef if ef is not None else self.params.ef_search, k)
        ef0 += len(self.deleted)
        found = self._search_layer(q, ep, ef0, 0)
        out = []
        for d, nid in found:
            if nid in self.deleted:
                continue
            out.append((nid, 1.0 - d))
            if len(out) == k:
                break
        return out

    def _exact(self, q: np.ndarray, k: int) -> list[tuple[int, float]]:
        scored = sorted(
            (1.0 - float(q @ self.normed[nid]), nid)
            for nid in self.vectors if nid not in self.deleted
        )
        return [(nid, 1.0 - d) for d, nid in scored[:k]]

    # --- deletion -----------------------------------------------------------

    def delete(self, node_id: int) -> None:
        if node_id not in self.vectors or node_id in self.deleted:
            raise UnknownChunk(f"no live node: {node_id}")
        self.deleted.add(node_id)
        if self.entry == node_id:
            live = [(self.max_layer_of(nid), -nid)
                    for nid in self.vectors if nid not in self.deleted]
            if live:
                _, neg = max(live)
                self.entry = -neg
            # else: keep the tombstone as a waypoint for future inserts

    def rebuild(self) -> None:
        """Re-insert live nodes (ascending id) into a fresh graph in place."""
        fresh = HnswIndex(self.dim, self.params)
        for nid in sorted(self.vectors):
            if nid not in self.deleted:
                fresh.add(nid, self.vectors[nid])
        self.rng = fresh.rng
        self.rng_draws = fresh.rng_draws
        self.vectors = fresh.vectors
        self.normed = fresh.normed
        self.links = fresh.links
        self.deleted = fresh.deleted
        self.entry = fresh.entry

    # --- structural checks (used by tests) ----------------------------------

    def check_invariants(self) -> None:
        for nid, layers in self.links.items():
            for layer, nbs in enumerate(layers):
                cap = self._cap(layer)
                assert len(nbs) <= cap, f"node {nid} layer {layer} over cap"
                assert len(set(nbs)) == len(nbs), f"node {nid} duplicate link"
                assert nid not in nbs, f"node {nid} self link"
                for nb in nbs:
                    assert nb in self.links, f"dangling link {nid}->{nb}"
                    assert layer < len(self.links[nb]), \
                        f"link {nid}->{nb} above {nb}'s top layer"
        if self.entry is not None:
            assert self.entry in self.links
            top = self.max_layer_of(self.entry)
            for nid in self.links:
                assert self.max_layer_of(nid) <= top, \
                    "entry point is not on the top layer"

    # --- persistence --------------------------------------------------------

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<I", FORMAT_VERSION))
            f.write(struct.pack(
                "<III", self.params.m, self.params.ef_construction,
                self.params.ef_search))
            f.write(struct.pack("<QQ", self.params.rng_seed, self.rng_draws))
            f.write(struct.pack("<q", -1 if self.entry is None else self.entry))
            f.write(struct.pack("<Q", len(self.links)))
            for nid in sorted(self.links):
                layers = self.links[nid]
                f.write(struct.pack("<QI", nid, len(layers)))
                for nbs in layers:
                    f.write(struct.pack("<Q", len(nbs)))
                    if nbs:
                        f.write(struct.pack(f"<{len(nbs)}Q", *nbs))
            dead = sorted(self.deleted)
            f.write(struct.pack("<Q", len(dead)))
            if dead:
                f.write(struct.pack(f"<{len(dead)}Q", *dead))

    @classmethod
    def load(cls, path: str | Path, dim: int,
             vectors: dict[int, np.ndarray]) -> "HnswIndex":
        from .errors import CorruptStore
        blob = Path(path).read_bytes()
        try:
            if blob[:4] != MAGIC:
                raise CorruptStore("bad graph magic", offset=0)
            pos = 4
            (version,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            if version != FORMAT_VERSION:
                raise CorruptStore(f"unsupported graph version {version}")
            m, ef_c, ef_s = struct.unpack_from("<III", blob, pos)
            pos += 12
            seed, draws = struct.unpack_from("<QQ", blob, pos)
            pos += 16
            (entry,) = struct.unpack_from("<q", blob, pos)
            pos += 8
            idx = cls(dim, HnswParams(m=m, ef_construction=ef_c,
                                      ef_search=ef_s, rng_seed=seed))
            for _ in range(draws):
                idx.rng.random()
            idx.rng_draws = draws
            (count,) = struct.unpack_from("<Q", blob, pos)
            pos += 8
            for _ in range(count):
                nid, n_layers = struct.unpack_from("<QI", blob, pos)
                pos += 12
                layers = []
                for _ in range(n_layers):
                    (n_nbs,) = struct.unpack_from("<Q", blob, pos)
                    pos += 8
                    nbs = list(struct.unpack_from(f"<{n_nbs}Q", blob, pos))
                    pos += 8 * n_nbs
                    layers.append(nbs)
                if nid not in vectors:
                    raise CorruptStore(f"graph node {nid} has no vector")
                idx.links[nid] = layers
                arr = np.asarray(vectors[nid], dtype=np.float32)
                if arr.shape != (dim,):
                    raise CorruptStore(f"vector {nid} has wrong shape")
                idx.vectors[nid] = arr
                idx.normed[nid] = _normalize(arr)
            (n_dead,) = struct.unpack_from("<Q", blob, pos)
            pos += 8
            dead = struct.unpack_from(f"<{n_dead}Q", blob, pos)
            pos += 8 * n_dead
            idx.deleted = set(dead)
            idx.entry = None if entry == -1 else entry
        except struct.error as e:
            raise CorruptStore(f"truncated graph file: {e}", offset=pos) from e
        if idx.entry is not None and idx.entry not in idx.links:
            raise CorruptStore(f"entry {idx.entry} not in graph")
        for nid in idx.deleted:
            if nid not in idx.links:
                raise CorruptStore(f"deleted id {nid} not in graph")
        if len(idx.links) != len(vectors):
            raise CorruptStore(
                f"graph has {len(idx.links)} nodes, "
                f"vector file has {len(vectors)}")
        return idx
