"""Document loading, normalization, and chunking.

Documents are loaded from plain text, markdown, or HTML files, normalized to
a canonical text form, and split into overlapping character windows. Chunk
identity is a pure function of (source_path, start_offset, end_offset), so
re-ingesting an unchanged file reproduces the same chunk ids on any platform.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from html.parser import HTMLParser
from pathlib import Path

from .errors import IoError, UnsupportedFormat

_EXTENSION_FORMATS = {
    ".txt": "plain_text",
    ".md": "markdown",
    ".markdown": "markdown",
    ".html": "html",
    ".htm": "html",
}

_BLOCK_TAGS = {
    "p", "div", "br", "hr", "li", "ul", "ol", "dl", "dt", "dd",
    "h1", "h2", "h3", "h4", "h5", "h6",
    "table", "thead", "tbody", "tr", "blockquote", "pre",
    "section", "article", "header", "footer", "nav", "aside", "main", "form",
}


@dataclass(frozen=True)
class Document:
    source_path: str
    format: str          # plain_text | markdown | html
    raw_text: str
    mtime: int           # unix seconds
    sha256: str          # hex digest of the raw file bytes


@dataclass(frozen=True)
class ChunkingParams:
    chunk_size: int = 500
    overlap: int = 50
    snap_to_word_boundary: bool = True

    def validate(self) -> None:
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        if not (0 <= self.overlap < self.chunk_size):
            raise ValueError("overlap must satisfy 0 <= overlap < chunk_size")


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    source_path: str
    start_offset: int
    end_offset: int
    text: str
    seq: int
    doc_sha256: str


@dataclass
class IngestReport:
    files_seen: int = 0
    files_ingested: int = 0
    files_skipped_unchanged: int = 0
    chunks_added: int = 0
    errors: list = field(default_factory=list)  # [(path, message)]

    def to_dict(self) -> dict:
        return {
            "files_seen": self.files_seen,
            "files_ingested": self.files_ingested,
            "files_skipped_unchanged": self.files_skipped_unchanged,
            "chunks_added": self.chunks_added,
            "errors": [{"path": p, "message": m} for p, m in self.errors],
        }


class _TagStripper(HTMLParser):
    """Collects text content; block-level tags become newline separators."""

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.parts: list[str] = []
        self._skip_depth = 0

    def handle_starttag(self, tag, attrs):
        if tag in ("script", "style"):
            self._skip_depth += 1
        elif tag in _BLOCK_TAGS:
            self.parts.append("\n")

    def handle_endtag(self, tag):
        if tag in ("script", "style"):
            self._skip_depth = max(0, self._skip_depth - 1)
        elif tag in _BLOCK_TAGS:
            self.parts.append("\n")

    def handle_data(self, data):
        if not self._skip_depth:
            self.parts.append(data)


def strip_html(markup: str) -> str:
    """Drop tags, keep text; adjacent block elements separate with one newline."""
    parser = _TagStripper()
    parser.feed(markup)
    parser.close()
    text = "".join(parser.parts)
    text = re.sub(r"\s*\n\s*", "\n", text)
    return text.strip()


def load_document(path: str | Path) -> Document:
    """Load a single file into a Document.

    Format is inferred from the extension. HTML is tag-stripped with block
    elements acting as newline separators; plain text and markdown pass
    through untouched. Undecodable bytes are replaced, never fatal.
    """
    p = Path(path)
    ext = p.suffix.lower()
    fmt = _EXTENSION_FORMATS.get(ext)
    if fmt is None:
        raise UnsupportedFormat(f"unsupported file extension: {ext or '(none)'} ({p})")
    try:
        data = p.read_bytes()
        mtime = int(p.stat().st_mtime)
    except OSError as e:
        raise IoError(f"cannot read {p}: {e}") from e
    sha = hashlib.sha256(data).hexdigest()
    text = data.decode("utf-8", errors="replace")
    if fmt == "html":
        text = strip_html(text)
    return Document(source_path=str(p), format=fmt, raw_text=text, mtime=mtime, sha256=sha)


def normalize_text(raw: str) -> str:
    """Canonicalize text: CRLF to LF, per-line trailing whitespace removed,
    runs of 3+ newlines collapsed to 2, whole text trimmed. Idempotent."""
    text = raw.replace("\r\n", "\n")
    text = "\n".join(line.rstrip() for line in text.split("\n"))
    text = re.sub(r"\n{3,}", "\n\n", text)
    return text.strip()


def chunk_spans(text: str, params: ChunkingParams) -> list[tuple[int, int]]:
    """Sliding-window spans over ``text``.

    Windows are ``chunk_size`` characters wide. With snapping enabled, a
    non-final window end retreats to just after the last whitespace character
    at or before the nominal end, but never to or before start+1; if the
    window contains no whitespace the nominal end stands. The next window
    starts ``overlap`` characters before the previous end, so spans always
    cover the text with no gaps.
    """
    params.validate()
    n = len(text)
    if n == 0:
        return []
    spans: list[tuple[int, int]] = []
    start = 0
    while True:
        nominal_end = start + params.chunk_size
        if nominal_end >= n:
            spans.append((start, n))
            break
        end = nominal_end
        if params.snap_to_word_boundary:
            for j in range(nominal_end, start + 1, -1):
                if text[j - 1].isspace():
                    end = j
                    break
        spans.append((start, end))
        start = max(end - params.overlap, start + 1)
    return spans


def chunk_id_for(source_path: str, start_offset: int, end_offset: int) -> str:
    """Deterministic chunk identity; stable across runs and platforms."""
    key = f"{source_path}:{start_offset}:{end_offset}"
    return hashlib.sha256(key.encode("utf-8")).hexdigest()


def chunk_text(text: str, params: ChunkingParams, source_path: str = "",
               doc_sha256: str = "") -> list[Chunk]:
    """Split normalized ``text`` into Chunks with provenance metadata."""
    chunks = []
    for seq, (start, end) in enumerate(chunk_spans(text, params)):
        chunks.append(Chunk(
            chunk_id=chunk_id_for(source_path, start, end),
            source_path=source_path,
            start_offset=start,
            end_offset=end,
            text=text[start:end],
            seq=seq,
            doc_sha256=doc_sha256,
        ))
    return chunks


def iter_document_files(root: Path):
    """Supported document files under ``root``, in lexicographic path order."""
    files = [p for p in root.rglob("*")
             if p.is_file() and p.suffix.lower() in _EXTENSION_FORMATS]
    files.sort(key=lambda p: p.relative_to(root).as_posix())
    return files


def ingest_folder(root: str | Path, sink, params: ChunkingParams | None = None) -> IngestReport:
    """Walk ``root`` recursively and ingest every supported document into ``sink``.

    Files whose (path, sha256) already appear in the sink's manifest are
    skipped. For changed files the old chunks for that source are deleted
    before the new ones are added. Source paths are recorded relative to
    ``root`` (POSIX separators) so the resulting chunk ids are identical on
    every platform. Per-file read errors are recorded in the report and never
    abort the walk. Requires exclusive write access to the sink.
    """
    params = params or ChunkingParams()
    params.validate()
    root = Path(root)
    if not root.is_dir():
        raise IoError(f"not a directory: {root}")
    report = IngestReport()
    for path in iter_document_files(root):
        report.files_seen += 1
        rel = path.relative_to(root).as_posix()
        try:
            doc = load_document(path)
        except (IoError, UnsupportedFormat) as e:
            report.errors.append((rel, str(e)))
            continue
        existing = sink.manifest.files.get(rel)
        if existing is not None and existing.sha256 == doc.sha256:
            report.files_skipped_unchanged += 1
            continue
        text = normalize_text(doc.raw_text)
        chunks = chunk_text(text, params, source_path=rel, doc_sha256=doc.sha256)
        if existing is not None:
            sink.delete_by_source(rel)
        for chunk in chunks:
            sink.add_chunk(chunk)
        sink.manifest.record_file(rel, doc.sha256, doc.mtime, len(chunks))
        report.files_ingested += 1
        report.chunks_added += len(chunks)
    return report
