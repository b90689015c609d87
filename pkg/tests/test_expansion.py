import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sprint_ir.analyzer import Analyzer
from sprint_ir.errors import InvalidInputError
from sprint_ir.expansion import (
    ExpansionRecord,
    append_generated_queries,
    append_top_k_tokens,
    expand_text,
)
from sprint_ir.representation import TermWeightVector, Vocabulary


def test_generated_queries_example():
    out = append_generated_queries("cats purr", ["do cats purr", "why cats purr"], q=2)
    assert out == "cats purr do cats purr why cats purr"
    assert append_generated_queries("cats purr", ["x"], q=0) == "cats purr"
    assert append_generated_queries("a", ["b", "c", "d"], q=2) == "a b c"


def test_top_k_tokens_example():
    w = TermWeightVector({"purr": 5, "feline": 4, "pet": 3})
    assert append_top_k_tokens("cats purr", w, k=2) == "cats purr feline pet"
    assert append_top_k_tokens("cats purr", w, k=0) == "cats purr"


def test_top_k_ties_and_vocab():
    vocab = Vocabulary(("zeta", "alpha", "cat"))
    w = TermWeightVector({0: 2.0, 1: 2.0, 2: 9.0})
    assert append_top_k_tokens("cat", w, k=5, vocab=vocab) == "cat alpha zeta"
    with pytest.raises(InvalidInputError):
        append_top_k_tokens("cat", w, k=5)


def test_top_k_uses_analyzer_for_presence():
    w = TermWeightVector({"running": 3, "fast": 1})
    assert append_top_k_tokens("he runs", w, k=2, analyzer=Analyzer()) == "he runs fast"
    assert append_top_k_tokens("he runs", w, k=2) == "he runs running fast"


def test_record_validation_and_expand_text():
    with pytest.raises(InvalidInputError):
        ExpansionRecord("d1", "generated-queries")
    with pytest.raises(InvalidInputError):
        ExpansionRecord("d1", "shuffle", queries=("a",))
    rec = ExpansionRecord("d1", "generated-queries", queries=("x y",))
    assert expand_text("t", rec) == "t x y"
    assert expand_text("t", None) == "t"


words = st.text("abcde", min_size=1, max_size=4)


@settings(max_examples=80, deadline=None)
@given(st.lists(words, min_size=1, max_size=6).map(" ".join), st.lists(words, max_size=10),
       st.integers(0, 12))
def test_generated_is_prefix_extension(doc, queries, q):
    out = append_generated_queries(doc, queries, q)
    assert out.startswith(doc)
    assert len(out.split()) == len(doc.split()) + sum(len(x.split()) for x in queries[:q])


@settings(max_examples=80, deadline=None)
@given(st.lists(words, min_size=1, max_size=6).map(" ".join),
       st.dictionaries(words, st.floats(0.1, 9), max_size=10), st.integers(0, 12))
def test_top_k_appends_only_new_tokens(doc, weights, k):
    out = append_top_k_tokens(doc, TermWeightVector(weights), k)
    assert out.startswith(doc)
    added = out[len(doc):].split()
    assert len(added) <= k and len(set(added)) == len(added)
    assert not set(added) & set(doc.split())
