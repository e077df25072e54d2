"""Text analysis shared by the keyword index and the hash embedder.

One analyzer, no configuration: split on any non-alphanumeric character and
lowercase. No stemming and no stopword removal, so matching behavior stays
exact and predictable.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Token:
    term: str      # lowercased
    position: int  # 0-based word position within the text
    start: int     # character offset of the first character
    end: int       # character offset one past the last character


def tokenize(text: str) -> list[Token]:
    """Split ``text`` into tokens at non-alphanumeric characters."""
    tokens: list[Token] = []
    i, n = 0, len(text)
    position = 0
    while i < n:
        if not text[i].isalnum():
            i += 1
            continue
        j = i + 1
        while j < n and text[j].isalnum():
            j += 1
        tokens.append(Token(term=text[i:j].lower(), position=position, start=i, end=j))
        position += 1
        i = j
    return tokens


def terms_of(text: str) -> list[str]:
    """Just the term strings, in order."""
    return [t.term for t in tokenize(text)]
