"""Keyword index: BM25 ranking over an in-memory inverted index.

Postings keep within-chunk token positions so phrase queries can check
adjacency. The on-disk layout is three data files plus meta.json:

    terms.dat     sorted terms; per term: u32 utf8 length, utf8 bytes,
                  u64 offset into postings.dat
    postings.dat  per term at its offset: u32 posting count, then per
                  posting u32 ref, u32 tf, tf * u32 positions
    stored.dat    one JSON object per line: ref, chunk_id, source_path,
                  ext, seq, text, length
    meta.json     {"doc_count", "total_len", "format_version"}

All integers little-endian. Refs are internal and dense-ish but never
reused within one save/load cycle; chunk ids are the stable handle.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path, PurePosixPath

from .analysis import terms_of, tokenize
from .errors import (
    CorruptStore,
    DuplicateChunk,
    EmptyQuery,
    PureNegationQuery,
    StoreClosed,
    UnknownChunk,
    UnknownSource,
)
from .query import And, Field, Node, Not, Or, Phrase, Term, parse_query, query_terms

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def validate(self) -> None:
        if self.k1 < 0:
            raise ValueError("k1 must be >= 0")
        if not 0 <= self.b <= 1:
            raise ValueError("b must be within [0, 1]")


def ext_of(source_path: str) -> str:
    """Lowercased extension without the dot; '' when the path has none."""
    return PurePosixPath(source_path).suffix.lstrip(".").lower()


@dataclass(frozen=True)
class StoredChunk:
    ref: int
    chunk_id: str
    source_path: str
    ext: str
    seq: int
    text: str
    length: int    # token count
    start_offset: int = 0
    end_offset: int = 0


@dataclass(frozen=True)
class Hit:
    chunk_id: str
    score: float
    source_path: str
    text: str
    seq: int


@dataclass(frozen=True)
class PageHit:
    chunk_id: str
    score: float
    snippet: str
    source_path: str


@dataclass(frozen=True)
class ResultPage:
    hits: tuple[PageHit, ...]
    total_hits: int
    page: int        # 1-based
    page_size: int

    def __post_init__(self):
        if len(self.hits) > self.page_size:
            raise ValueError("more hits than page_size")


def highlight(text: str, terms: list[str], window: int = 160,
              pre: str = "**", post: str = "**") -> str:
    """Best ``window``-char snippet with matched tokens wrapped in markers.

    The window is chosen to cover the most distinct query terms, earliest
    start winning ties. Ellipses mark truncation at either end.
    """
    termset = set(terms)
    toks = [t for t in tokenize(text) if t.term in termset]
    if len(text) <= window:
        starts = [0]
        window = len(text)
    elif not toks:
        return text[:window] + "..."
    else:
        max_start = len(text) - window
        starts = sorted({0} | {min(max(0, t.end - window), max_start)
                         for t in toks})
    best_start, best_cover = 0, -1
    for s in starts:
        cover = len({t.term for t in toks if t.start >= s and t.end <= s + window})
        if cover > best_cover:
            best_start, best_cover = s, cover
    s = best_start
    inside = [t for t in toks if t.start >= s and t.end <= s + window]
    out, pos = [], s
    for t in inside:
        out.append(text[pos:t.start])
        out.append(pre + text[t.start:t.end] + post)
        pos = t.end
    out.append(text[pos:s + window])
    snippet = "".join(out)
    if s > 0:
        snippet = "..." + snippet
    if s + window < len(text):
        snippet = snippet + "..."
    return snippet


@dataclass(frozen=True)
class _Posting:
    ref: int
    tf: int
    positions: tuple[int, ...]


class SparseIndex:
    def __init__(self, params: Bm25Params | None = None):
        self.params = params or Bm25Params()
        self.params.validate()
        self.postings: dict[str, list[_Posting]] = {}
        self.stored: dict[int, StoredChunk] = {}
        self.by_chunk_id: dict[str, int] = {}
        self.total_len = 0
        self.next_ref = 0
        self.closed = False

    def close(self) -> None:
        self.closed = True

    def _check_open(self) -> None:
        if self.closed:
            raise StoreClosed("index is closed")

    # --- mutation ---------------------------------------------------------

    def add_chunk(self, chunk) -> None:
        """Index one chunk. ``chunk`` needs chunk_id, source_path, seq, text."""
        self._check_open()
        if chunk.chunk_id in self.by_chunk_id:
            raise DuplicateChunk(f"chunk already indexed: {chunk.chunk_id}")
        ref = self.next_ref
        self.next_ref += 1
        toks = tokenize(chunk.text)
        by_term: dict[str, list[int]] = {}
        for t in toks:
            by_term.setdefault(t.term, []).append(t.position)
        for term, positions in by_term.items():
            plist = self.postings.setdefault(term, [])
            plist.append(_Posting(ref, len(positions), tuple(positions)))
        self.stored[ref] = StoredChunk(
            ref=ref,
            chunk_id=chunk.chunk_id,
            source_path=chunk.source_path,
            ext=ext_of(chunk.source_path),
            seq=chunk.seq,
            text=chunk.text,
            length=len(toks),
            start_offset=getattr(chunk, "start_offset", 0),
            end_offset=getattr(chunk, "end_offset", 0),
        )
        self.by_chunk_id[chunk.chunk_id] = ref
        self.total_len += len(toks)

    def delete(self, chunk_id: str) -> None:
        self._check_open()
        if chunk_id not in self.by_chunk_id:
            raise UnknownChunk(f"no such chunk: {chunk_id}")
        ref = self.by_chunk_id.pop(chunk_id)
        sc = self.stored.pop(ref)
        self.total_len -= sc.length
        dead_terms = []
        for term, plist in self.postings.items():
            kept = [p for p in plist if p.ref != ref]
            if len(kept) != len(plist):
                if kept:
                    self.postings[term] = kept
                else:
                    dead_terms.append(term)
        for term in dead_terms:
            del self.postings[term]

    def delete_by_source(self, source_path: str) -> int:
        ids = [sc.chunk_id for sc in self.stored.values()
               if sc.source_path == source_path]
        for cid in ids:
            self.delete(cid)
        return len(ids)

    def document_text(self, source_path: str) -> str:
        """Reconstruct a source's normalized text from its stored chunks.

        Adjacent chunks overlap; the overlapping prefix of each later chunk
        is dropped using the recorded offsets, so the result is exact.
        """
        chunks = sorted(
            (sc for sc in self.stored.values()
             if sc.source_path == source_path),
            key=lambda sc: sc.seq,
        )
        if not chunks:
            raise UnknownSource(f"no ingested source {source_path!r}")
        parts: list[str] = []
        prev_end = 0
        for sc in chunks:
            skip = max(0, prev_end - sc.start_offset)
            parts.append(sc.text[skip:])
            prev_end = max(prev_end, sc.end_offset)
        return "".join(parts)

    # --- stats ------------------------------------------------------------

    @property
    def doc_count(self) -> int:
        return len(self.stored)

    @property
    def avgdl(self) -> float:
        return self.total_len / self.doc_count if self.stored else 0.0

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        n = self.doc_count
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))

    # --- boolean evaluation ------------------------------------------------

    def _term_refs(self, term: str) -> set[int]:
        return {p.ref for p in self.postings.get(term, ())}

    def _phrase_refs(self, terms: tuple[str, ...]) -> set[int]:
        if len(terms) == 1:
            return self._term_refs(terms[0])
        lists = []
        for term in terms:
            plist = self.postings.get(term)
            if not plist:
                return set()
            lists.append({p.ref: p.positions for p in plist})
        refs = set(lists[0])
        for d in lists[1:]:
            refs &= set(d)
        out = set()
        for ref in refs:
            later = [frozenset(lists[i][ref]) for i in range(1, len(terms))]
            for pos in lists[0][ref]:
                if all((pos + 1 + i) in later[i] for i in range(len(later))):
                    out.add(ref)
                    break
        return out

    def _field_refs(self, node: Field) -> set[int]:
        if node.name == "source":
            return {ref for ref, sc in self.stored.items()
                    if sc.source_path == node.value}
        return {ref for ref, sc in self.stored.items() if sc.ext == node.value}

    def match(self, node: Node) -> set[int]:
        """Evaluate a query AST to the set of matching refs.

        NOT is only meaningful as a conjunct: it subtracts from its
        siblings. Anywhere else it would denote an unbounded complement,
        which this index refuses to materialize.
        """
        if isinstance(node, Term):
            return self._term_refs(node.term)
        if isinstance(node, Phrase):
            return self._phrase_refs(node.terms)
        if isinstance(node, Field):
            return self._field_refs(node)
        if isinstance(node, Or):
            out: set[int] = set()
            for c in node.children:
                out |= self.match(c)
            return out
        if isinstance(node, And):
            positive = [c for c in node.children if not isinstance(c, Not)]
            negative = [c for c in node.children if isinstance(c, Not)]
            if not positive:
                raise PureNegationQuery(
                    "NOT requires at least one positive conjunct")
            refs = self.match(positive[0])
            for c in positive[1:]:
                refs &= self.match(c)
            for neg in negative:
                refs -= self.match(neg.child)
            return refs
        if isinstance(node, Not):
            raise PureNegationQuery(
                "NOT is only allowed alongside positive AND terms")
        raise TypeError(f"not a query node: {node!r}")

    # --- scoring ------------------------------------------------------------

    def bm25(self, ref: int, terms: list[str]) -> float:
        if ref not in self.stored:
            raise UnknownChunk(f"no such ref: {ref}")
        sc = self.stored[ref]
        k1, b = self.params.k1, self.params.b
        avgdl = self.avgdl
        score = 0.0
        for term in dict.fromkeys(terms):   # duplicates contribute once
            tf = 0
            for p in self.postings.get(term, ()):
                if p.ref == ref:
                    tf = p.tf
                    break
            if tf == 0:
                continue
            norm = k1 * (1.0 - b + b * sc.length / avgdl) if avgdl > 0 else k1
            score += self.idf(term) * (tf * (k1 + 1.0)) / (tf + norm)
        return score

    def search(self, query: str | Node, k: int = 10) -> list[Hit]:
        if isinstance(query, str):
            if not query.strip():
                raise EmptyQuery("query is blank")
            node = parse_query(query)
        else:
            node = query
        refs = self.match(node)
        terms = query_terms(node)
        scored = [(self.bm25(ref, terms), self.stored[ref]) for ref in refs]
        scored.sort(key=lambda pair: (-pair[0], pair[1].chunk_id))
        return [
            Hit(sc.chunk_id, score, sc.source_path, sc.text, sc.seq)
            for score, sc in scored[:k]
        ]

    def rank_text(self, text: str, k: int) -> list[Hit]:
        """BM25 over the union of the text's analyzed terms (no operators)."""
        terms = terms_of(text)
        if not terms:
            raise EmptyQuery("query has no indexable terms")
        refs: set[int] = set()
        for term in terms:
            refs |= self._term_refs(term)
        scored = [(self.bm25(ref, terms), self.stored[ref]) for ref in refs]
        scored.sort(key=lambda pair: (-pair[0], pair[1].chunk_id))
        return [
            Hit(sc.chunk_id, score, sc.source_path, sc.text, sc.seq)
            for score, sc in scored[:k]
        ]

    def search_page(self, query: str | Node, page: int = 1,
                    page_size: int = 10, window: int = 160) -> ResultPage:
        """Paged boolean search with highlighted snippets.

        A page past the end is not an error; it returns empty hits with
        the true total so pagination controls can rail correctly.
        """
        if page < 1:
            raise ValueError("page must be >= 1")
        if not 1 <= page_size <= 1000:
            raise ValueError("page_size must be within [1, 1000]")
        if isinstance(query, str):
            if not query.strip():
                raise EmptyQuery("query is blank")
            node = parse_query(query)
        else:
            node = query
        refs = self.match(node)
        terms = query_terms(node)
        scored = [(self.bm25(ref, terms), self.stored[ref]) for ref in refs]
        scored.sort(key=lambda pair: (-pair[0], pair[1].chunk_id))
        lo = (page - 1) * page_size
        hits = tuple(
            PageHit(sc.chunk_id, score,
                    highlight(sc.text, terms, window), sc.source_path)
            for score, sc in scored[lo:lo + page_size]
        )
        return ResultPage(hits, len(scored), page, page_size)

    def semantic_rerank(self, query: str | Node, raw_query: str, k: int,
                        embedder, window: int = 160) -> ResultPage:
        """Re-score a BM25 candidate pool by cosine against ``embedder``.

        Candidates come from boolean evaluation of ``query`` ranked by
        BM25, pool size max(4k, 100); ``raw_query`` is what gets embedded.
        Embeddings are computed on the fly; nothing dense is stored.
        """
        if isinstance(query, str):
            if not query.strip():
                raise EmptyQuery("query is blank")
            node = parse_query(query)
        else:
            node = query
        pool = self.search(node, max(4 * k, 100))
        terms = query_terms(node)
        qv = embedder.embed(raw_query)
        rescored = []
        for hit in pool:
            cv = embedder.embed(hit.text)
            rescored.append((float(qv @ cv), hit))
        rescored.sort(key=lambda pair: (-pair[0], pair[1].chunk_id))
        hits = tuple(
            PageHit(hit.chunk_id, score,
                    highlight(hit.text, terms, window), hit.source_path)
            for score, hit in rescored[:k]
        )
        return ResultPage(hits, len(pool), 1, max(k, 1))

    # --- persistence --------------------------------------------------------

    def save(self, dirpath: str | Path) -> None:
        d = Path(dirpath)
        d.mkdir(parents=True, exist_ok=True)
        offsets: dict[str, int] = {}
        with open(d / "postings.dat", "wb") as f:
            for term in sorted(self.postings):
                plist = sorted(self.postings[term], key=lambda p: p.ref)
                offsets[term] = f.tell()
                f.write(struct.pack("<I", len(plist)))
                for p in plist:
                    f.write(struct.pack("<II", p.ref, p.tf))
                    f.write(struct.pack(f"<{p.tf}I", *p.positions))
        with open(d / "terms.dat", "wb") as f:
            for term in sorted(self.postings):
                raw = term.encode("utf-8")
                f.write(struct.pack("<I", len(raw)))
                f.write(raw)
                f.write(struct.pack("<Q", offsets[term]))
        with open(d / "stored.dat", "w", encoding="utf-8") as f:
            for ref in sorted(self.stored):
                sc = self.stored[ref]
                f.write(json.dumps({
                    "ref": sc.ref,
                    "chunk_id": sc.chunk_id,
                    "source_path": sc.source_path,
                    "ext": sc.ext,
                    "seq": sc.seq,
                    "text": sc.text,
                    "length": sc.length,
                    "start_offset": sc.start_offset,
                    "end_offset": sc.end_offset,
                }, ensure_ascii=False) + "\n")
        with open(d / "meta.json", "w", encoding="utf-8") as f:
            json.dump({
                "doc_count": self.doc_count,
                "total_len": self.total_len,
                "format_version": FORMAT_VERSION,
            }, f, indent=2)
            f.write("\n")

    @classmethod
    def load(cls, dirpath: str | Path) -> "SparseIndex":
        d = Path(dirpath)
        idx = cls()
        try:
            meta = json.loads((d / "meta.json").read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            raise CorruptStore(f"cannot read meta.json: {e}") from e
        if meta.get("format_version") != FORMAT_VERSION:
            raise CorruptStore(
                f"unsupported format_version: {meta.get('format_version')!r}")
        try:
            term_blob = (d / "terms.dat").read_bytes()
            post_blob = (d / "postings.dat").read_bytes()
            stored_text = (d / "stored.dat").read_text(encoding="utf-8")
        except OSError as e:
            raise CorruptStore(f"cannot read index files: {e}") from e

        for line_no, line in enumerate(stored_text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                sc = StoredChunk(
                    ref=rec["ref"], chunk_id=rec["chunk_id"],
                    source_path=rec["source_path"], ext=rec["ext"],
                    seq=rec["seq"], text=rec["text"], length=rec["length"],
                    start_offset=rec.get("start_offset", 0),
                    end_offset=rec.get("end_offset", 0),
                )
            except (ValueError, KeyError, TypeError) as e:
                raise CorruptStore(
                    f"bad stored.dat line {line_no}: {e}") from e
            if sc.ref in idx.stored or sc.chunk_id in idx.by_chunk_id:
                raise CorruptStore(f"duplicate ref or chunk_id at line {line_no}")
            idx.stored[sc.ref] = sc
            idx.by_chunk_id[sc.chunk_id] = sc.ref

        pos = 0
        while pos < len(term_blob):
            if pos + 4 > len(term_blob):
                raise CorruptStore("truncated terms.dat", offset=pos)
            (tlen,) = struct.unpack_from("<I", term_blob, pos)
            pos += 4
            if pos + tlen + 8 > len(term_blob):
                raise CorruptStore("truncated terms.dat", offset=pos)
            term = term_blob[pos:pos + tlen].decode("utf-8")
            pos += tlen
            (off,) = struct.unpack_from("<Q", term_blob, pos)
            pos += 8
            try:
                (count,) = struct.unpack_from("<I", post_blob, off)
                p = off + 4
                plist = []
                for _ in range(count):
                    ref, tf = struct.unpack_from("<II", post_blob, p)
                    p += 8
                    positions = struct.unpack_from(f"<{tf}I", post_blob, p)
                    p += 4 * tf
                    plist.append(_Posting(ref, tf, tuple(positions)))
            except struct.error as e:
                raise CorruptStore(
                    f"bad postings for term {term!r}: {e}", offset=off) from e
            for posting in plist:
                if posting.ref not in idx.stored:
                    raise CorruptStore(
                        f"posting for unknown ref {posting.ref} "
                        f"(term {term!r})", offset=off)
            idx.postings[term] = plist

        if meta.get("doc_count") != len(idx.stored):
            raise CorruptStore(
                f"meta doc_count {meta.get('doc_count')} != "
                f"stored {len(idx.stored)}")
        idx.total_len = sum(sc.length for sc in idx.stored.values())
        if meta.get("total_len") != idx.total_len:
            raise CorruptStore(
                f"meta total_len {meta.get('total_len')} != "
                f"computed {idx.total_len}")
        idx.next_ref = max(idx.stored, default=-1) + 1
        return idx
