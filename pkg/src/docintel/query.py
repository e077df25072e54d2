"""Boolean / phrase / field query language for the keyword store.

Grammar (recursive descent, lowest precedence first):

    query   := or_expr EOF
    or_expr := and_expr ("OR" and_expr)*
    and_expr:= not_expr (("AND")? not_expr)*      adjacent atoms imply AND
    not_expr:= "NOT" not_expr | atom
    atom    := "(" or_expr ")" | quoted phrase | field ":" value | bare term

Operators are case-sensitive uppercase. Bare terms are run through the same
analyzer as indexing; a bare word that analyzes to several terms (e.g.
"A-10") becomes a phrase so it matches the indexed token sequence. Field
names are limited to ``source`` and ``ext``. Parse errors carry the 0-based
character position of the offending token.
"""

from __future__ import annotations

from dataclasses import dataclass

from .analysis import terms_of
from .errors import ParseError

FIELD_NAMES = {"source", "ext"}

_OPERATORS = {"AND", "OR", "NOT"}


@dataclass(frozen=True)
class Term:
    term: str


@dataclass(frozen=True)
class Phrase:
    terms: tuple[str, ...]

    def __post_init__(self):
        if len(self.terms) < 1:
            raise ValueError("Phrase requires at least one term")


@dataclass(frozen=True)
class Field:
    name: str
    value: str

    def __post_init__(self):
        if self.name not in FIELD_NAMES:
            raise ValueError(f"field name must be one of {sorted(FIELD_NAMES)}")


@dataclass(frozen=True)
class And:
    children: tuple

    def __post_init__(self):
        if len(self.children) < 2:
            raise ValueError("And requires at least two children")


@dataclass(frozen=True)
class Or:
    children: tuple

    def __post_init__(self):
        if len(self.children) < 2:
            raise ValueError("Or requires at least two children")


@dataclass(frozen=True)
class Not:
    child: object


Node = Term | Phrase | Field | And | Or | Not


# --- lexer ----------------------------------------------------------------

_WORD_BREAK = {" ", "\t", "\n", "\r", "(", ")", '"'}


@dataclass(frozen=True)
class _Tok:
    kind: str   # word | quoted | lparen | rparen | eof
    text: str
    pos: int


def _lex(q: str) -> list[_Tok]:
    toks: list[_Tok] = []
    i, n = 0, len(q)
    while i < n:
        c = q[i]
        if c.isspace():
            i += 1
        elif c == "(":
            toks.append(_Tok("lparen", c, i))
            i += 1
        elif c == ")":
            toks.append(_Tok("rparen", c, i))
            i += 1
        elif c == '"':
            j = q.find('"', i + 1)
            if j < 0:
                raise ParseError("unbalanced quote", i)
            toks.append(_Tok("quoted", q[i + 1:j], i))
            i = j + 1
        else:
            j = i
            while j < n and q[j] not in _WORD_BREAK and not q[j].isspace():
                j += 1
            toks.append(_Tok("word", q[i:j], i))
            i = j
    toks.append(_Tok("eof", "", n))
    return toks


# --- parser ---------------------------------------------------------------

class _Parser:
    def __init__(self, q: str):
        self.q = q
        self.toks = _lex(q)
        self.i = 0

    @property
    def cur(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def parse(self) -> Node:
        if self.cur.kind == "eof":
            raise ParseError("empty query", 0)
        node = self.parse_or()
        if self.cur.kind != "eof":
            if self.cur.kind == "rparen":
                raise ParseError("unbalanced parenthesis", self.cur.pos)
            raise ParseError(f"unexpected {self.cur.text!r}", self.cur.pos)
        return node

    def parse_or(self) -> Node:
        children = [self.parse_and()]
        while self.cur.kind == "word" and self.cur.text == "OR":
            self.advance()
            children.append(self.parse_and())
        return children[0] if len(children) == 1 else Or(tuple(children))

    def parse_and(self) -> Node:
        children = [self.parse_not()]
        while True:
            tok = self.cur
            if tok.kind == "word" and tok.text == "AND":
                self.advance()
                children.append(self.parse_not())
            elif tok.kind in ("lparen", "quoted") or (
                tok.kind == "word" and tok.text != "OR"
            ):
                children.append(self.parse_not())
            else:
                break
        return children[0] if len(children) == 1 else And(tuple(children))

    def parse_not(self) -> Node:
        if self.cur.kind == "word" and self.cur.text == "NOT":
            self.advance()
            return Not(self.parse_not())
        return self.parse_atom()

    def parse_atom(self) -> Node:
        tok = self.cur
        if tok.kind == "lparen":
            self.advance()
            if self.cur.kind == "rparen":
                raise ParseError("empty parentheses", tok.pos)
            node = self.parse_or()
            if self.cur.kind != "rparen":
                raise ParseError("unbalanced parenthesis", tok.pos)
            self.advance()
            return node
        if tok.kind == "quoted":
            terms = terms_of(tok.text)
            if not terms:
                raise ParseError("phrase has no indexable terms", tok.pos)
            self.advance()
            return Phrase(tuple(terms))
        if tok.kind == "word":
            if tok.text in _OPERATORS:
                raise ParseError(f"dangling operator {tok.text}", tok.pos)
            self.advance()
            if ":" in tok.text:
                name, _, value = tok.text.partition(":")
                if name not in FIELD_NAMES:
                    raise ParseError(f"unknown field name: {name}", tok.pos)
                if not value:
                    raise ParseError(f"empty value for field {name}", tok.pos)
                return Field(name, value)
            terms = terms_of(tok.text)
            if not terms:
                raise ParseError("term has no indexable characters", tok.pos)
            return Term(terms[0]) if len(terms) == 1 else Phrase(tuple(terms))
        if tok.kind == "rparen":
            raise ParseError("unbalanced parenthesis", tok.pos)
        raise ParseError("unexpected end of query", tok.pos)


def parse_query(q: str) -> Node:
    """Parse ``q`` into a query AST. Raises ParseError with a character position."""
    return _Parser(q).parse()


# --- pretty printer -------------------------------------------------------

def print_query(node: Node) -> str:
    """Render an AST back to query syntax such that parse(print(ast)) == ast.

    Compound nodes are always parenthesized, so nesting survives the round
    trip exactly.
    """
    if isinstance(node, Term):
        return node.term
    if isinstance(node, Phrase):
        return '"' + " ".join(node.terms) + '"'
    if isinstance(node, Field):
        return f"{node.name}:{node.value}"
    if isinstance(node, Not):
        return "NOT " + print_query(node.child)
    if isinstance(node, And):
        return "(" + " AND ".join(print_query(c) for c in node.children) + ")"
    if isinstance(node, Or):
        return "(" + " OR ".join(print_query(c) for c in node.children) + ")"
    raise TypeError(f"not a query node: {node!r}")


def query_terms(node: Node) -> list[str]:
    """Terms used for ranking: every Term/Phrase term outside any NOT subtree."""
    out: list[str] = []

    def walk(n: Node) -> None:
        if isinstance(n, Term):
            out.append(n.term)
        elif isinstance(n, Phrase):
            out.extend(n.terms)
        elif isinstance(n, (And, Or)):
            for c in n.children:
                walk(c)
        # Field contributes no ranking terms; Not subtrees are excluded.

    walk(node)
    return out
