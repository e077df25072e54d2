import socket

import pytest

from docintel.llm import StubBackend


@pytest.fixture
def no_network(monkeypatch):
    """Fail the test if anything tries to open a socket."""
    def deny(*args, **kwargs):
        raise AssertionError("network access attempted")
    monkeypatch.setattr(socket, "socket", deny)
    monkeypatch.setattr(socket, "create_connection", deny)


@pytest.fixture
def echo_backend():
    return StubBackend(mode="echo_prompt")


def canned(*responses):
    return StubBackend(mode="canned", canned=list(responses))


@pytest.fixture
def docs_folder(tmp_path):
    """Five small text files, one containing a unique marker term."""
    root = tmp_path / "docs"
    root.mkdir()
    (root / "a_architecture.txt").write_text(
        "The system splits documents into overlapping chunks. "
        "Each chunk is indexed twice, once sparse and once dense.\n")
    (root / "b_caching.txt").write_text(
        "Caching sits in front of the retriever. The zorblatt cache "
        "invalidates whenever the store commits a new snapshot.\n")
    (root / "c_storage.md").write_text(
        "# Storage\n\nCommits are two phase. The manifest rename is the "
        "commit point and recovery rolls back anything uncommitted.\n")
    (root / "d_search.txt").write_text(
        "Keyword search uses BM25 over an inverted index. Semantic "
        "search embeds the query and walks a layered graph.\n")
    (root / "e_ranking.txt").write_text(
        "Fused ranking sums reciprocal ranks from both sides. Ties "
        "break on chunk id so results are stable.\n")
    return root
