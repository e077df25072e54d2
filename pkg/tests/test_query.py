import pytest
from hypothesis import given
from hypothesis import strategies as st

from docintel.errors import ParseError
from docintel.query import (
    And,
    Field,
    Not,
    Or,
    Phrase,
    Term,
    parse_query,
    print_query,
    query_terms,
)


# --- shapes ----------------------------------------------------------------

def test_bare_term():
    assert parse_query("hello") == Term("hello")


def test_bare_word_with_punctuation_becomes_phrase():
    # "A-10" analyzes to two tokens, so it must match them in sequence
    assert parse_query("A-10") == Phrase(("a", "10"))


def test_quoted_phrase():
    assert parse_query('"retrieval augmented generation"') == \
        Phrase(("retrieval", "augmented", "generation"))


def test_field_atoms():
    assert parse_query("source:docs/a.txt") == Field("source", "docs/a.txt")
    assert parse_query("ext:md") == Field("ext", "md")


def test_explicit_and_or_not():
    assert parse_query("a AND b") == And((Term("a"), Term("b")))
    assert parse_query("a OR b") == Or((Term("a"), Term("b")))
    assert parse_query("NOT a") == Not(Term("a"))


def test_adjacency_is_and():
    assert parse_query("alpha beta") == And((Term("alpha"), Term("beta")))


def test_precedence_or_lowest():
    assert parse_query("a OR b AND c") == \
        Or((Term("a"), And((Term("b"), Term("c")))))
    assert parse_query("NOT a AND b") == And((Not(Term("a")), Term("b")))


def test_parens_override():
    assert parse_query("(a OR b) AND c") == \
        And((Or((Term("a"), Term("b"))), Term("c")))


def test_nary_flattening():
    assert parse_query("a b c") == And((Term("a"), Term("b"), Term("c")))
    assert parse_query("a OR b OR c") == \
        Or((Term("a"), Term("b"), Term("c")))


def test_operators_are_case_sensitive():
    # lowercase "and" is an ordinary term
    assert parse_query("a and b") == \
        And((Term("a"), Term("and"), Term("b")))


def test_not_binds_tighter_than_and():
    assert parse_query("a AND NOT b") == And((Term("a"), Not(Term("b"))))


def test_nested_not():
    assert parse_query("NOT NOT a") == Not(Not(Term("a")))


# --- printing and the fixpoint --------------------------------------------

def test_print_forms():
    assert print_query(Term("a")) == "a"
    assert print_query(Phrase(("a", "b"))) == '"a b"'
    assert print_query(Field("ext", "md")) == "ext:md"
    assert print_query(Not(Term("a"))) == "NOT a"
    assert print_query(And((Term("a"), Or((Term("b"), Term("c")))))) == \
        "(a AND (b OR c))"


terms = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789",
                min_size=1, max_size=8)
values = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789./_-",
                 min_size=1, max_size=12)

atoms = st.one_of(
    st.builds(Term, terms),
    st.builds(Phrase, st.lists(terms, min_size=1, max_size=4).map(tuple)),
    st.builds(Field, st.sampled_from(["source", "ext"]), values),
)

asts = st.recursive(
    atoms,
    lambda kids: st.one_of(
        st.builds(Not, kids),
        st.builds(And, st.lists(kids, min_size=2, max_size=3).map(tuple)),
        st.builds(Or, st.lists(kids, min_size=2, max_size=3).map(tuple)),
    ),
    max_leaves=10,
)


@given(asts)
def test_parse_print_parse_fixpoint(ast):
    assert parse_query(print_query(ast)) == ast


@given(asts)
def test_printing_is_stable(ast):
    printed = print_query(ast)
    assert print_query(parse_query(printed)) == printed


# --- error fixtures --------------------------------------------------------

ERROR_FIXTURES = [
    ("", 0, "empty query"),
    ("   ", 0, "empty query"),
    ('"abc', 0, "unbalanced quote"),
    ('a AND "b', 6, "unbalanced quote"),
    ("(a", 0, "unbalanced parenthesis"),
    ("a)", 1, "unbalanced parenthesis"),
    ("()", 0, "empty parentheses"),
    ("(())", 1, "empty parentheses"),
    ("AND a", 0, "dangling operator"),
    ("a OR OR b", 5, "dangling operator"),
    ("a AND", 5, "unexpected end"),
    ("NOT", 3, "unexpected end"),
    ("foo:bar", 0, "unknown field"),
    ("source:", 0, "empty value"),
    ("ext:", 0, "empty value"),
    ("!!!", 0, "no indexable characters"),
    ('""', 0, "no indexable terms"),
    ("NOT NOT", 7, "unexpected end"),
]


@pytest.mark.parametrize("query,position,needle", ERROR_FIXTURES)
def test_error_positions(query, position, needle):
    with pytest.raises(ParseError) as exc:
        parse_query(query)
    assert exc.value.position == position
    assert needle in str(exc.value)


# --- term collection -------------------------------------------------------

def test_query_terms_skips_negations_and_fields():
    ast = parse_query('a AND "b c" AND NOT d AND ext:md')
    assert query_terms(ast) == ["a", "b", "c"]


def test_query_terms_deduplicates_nothing():
    # scoring dedupes; collection keeps order of appearance
    ast = parse_query("a OR a")
    assert query_terms(ast) == ["a", "a"]
