import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import sparta_oracle, splade_oracle
from sprint_ir.errors import InvalidInputError
from sprint_ir.representation import (
    SpartaParams,
    TermWeightVector,
    Vocabulary,
    binary_query_weights,
    sparta_term_weights,
    splade_term_weights,
    strip_expansion_tokens,
    tf_term_weights,
)


def test_sparta_hand_example():
    v = sparta_term_weights([[1, 0], [0, 1]], [[2, 0], [0, 3]])
    assert dict(v) == pytest.approx({0: math.log(3), 1: math.log(4)}, abs=1e-12)
    assert v[0] == pytest.approx(1.0986, abs=1e-4)


def test_sparta_huge_negative_bias_empties():
    rng = np.random.default_rng(0)
    v = sparta_term_weights(rng.normal(size=(4, 3)), rng.normal(size=(2, 3)), SpartaParams(bias=-1e9))
    assert len(v) == 0


def test_sparta_random_matches_loop():
    rng = np.random.default_rng(1)
    E, S = rng.normal(size=(3, 2)), rng.normal(size=(4, 2))
    got = sparta_term_weights(E, S, SpartaParams(bias=0.1))
    want = sparta_oracle(E.tolist(), S.tolist(), 0.1)
    assert got.keys() == want.keys()
    for k in want:
        assert got[k] == pytest.approx(want[k], abs=1e-12)


def test_sparta_dim_mismatch():
    with pytest.raises(InvalidInputError):
        sparta_term_weights([[1, 0]], [[1, 0, 0]])


def test_sparta_vocab_keys():
    vocab = Vocabulary(("cat", "dog"))
    v = sparta_term_weights([[1, 0], [0, 1]], [[2, 0], [0, 3]], vocab=vocab, source_id="p1")
    assert set(v) == {"cat", "dog"} and v.source_id == "p1"


def test_splade_hand_example():
    v = splade_term_weights([[0.5, -1], [2, 3]])
    assert dict(v) == pytest.approx({0: math.log(1.5), 1: math.log(4)}, abs=1e-12)


def test_splade_all_negative_and_single_column():
    assert len(splade_term_weights([[-1, -2], [-0.1, -5]])) == 0
    v = splade_term_weights([[0.7], [-2.0], [3.0]])
    assert dict(v) == pytest.approx({0: math.log1p(0.7), 2: math.log1p(3.0)})


def test_splade_nan_rejected():
    with pytest.raises(InvalidInputError):
        splade_term_weights([[float("nan"), 1.0]])


def test_binary_and_tf():
    assert dict(binary_query_weights([5, 9, 5])) == {5: 1.0, 9: 1.0}
    assert len(binary_query_weights([])) == 0
    assert dict(binary_query_weights([0])) == {0: 1.0}
    assert dict(tf_term_weights([1, 1, 2])) == {1: 2.0, 2: 1.0}
    assert len(tf_term_weights([])) == 0
    assert dict(tf_term_weights([7] * 1000)) == {7: 1000.0}


def test_out_of_vocab_id_rejected():
    with pytest.raises(InvalidInputError):
        binary_query_weights([3], vocab=Vocabulary(("a", "b")))


def test_strip_examples():
    rep = TermWeightVector({"a": 2, "b": 1, "c": 3})
    assert dict(strip_expansion_tokens(rep, {"a", "c"})) == {"a": 2, "c": 3}
    assert strip_expansion_tokens(rep, set(rep)) == rep
    assert len(strip_expansion_tokens(rep, set())) == 0


def test_vector_rejects_bad_weights():
    for bad in (0, -1.0, float("inf"), float("nan")):
        with pytest.raises(InvalidInputError):
            TermWeightVector({"a": bad})


small = st.integers(1, 5)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_sparta_permutation_invariant_over_passage(data):
    v, l, d = data.draw(small), data.draw(small), data.draw(small)
    floats = st.floats(-3, 3, allow_nan=False)
    E = data.draw(arrays(np.float64, (v, d), elements=floats))
    S = data.draw(arrays(np.float64, (l, d), elements=floats))
    perm = data.draw(st.permutations(range(l)))
    a = sparta_term_weights(E, S)
    b = sparta_term_weights(E, S[list(perm)])
    assert a.keys() == b.keys()
    for k in a:
        assert a[k] == pytest.approx(b[k], rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_splade_monotone_in_logits(data):
    v, l = data.draw(small), data.draw(small)
    W = data.draw(arrays(np.float64, (v, l), elements=st.floats(-3, 3, allow_nan=False)))
    bump = data.draw(arrays(np.float64, (v, l), elements=st.floats(0, 2, allow_nan=False)))
    lo, hi = splade_term_weights(W), splade_term_weights(W + bump)
    for k, w in lo.items():
        assert hi.get(k, 0.0) >= w


@settings(max_examples=60, deadline=None)
@given(st.dictionaries(st.sampled_from("abcdefgh"), st.floats(0.01, 10), max_size=8),
       st.sets(st.sampled_from("abcdefgh")))
def test_strip_dominance(rep, original):
    full = TermWeightVector(rep)
    stripped = strip_expansion_tokens(full, original)
    assert set(stripped) <= set(full)
    for q in ({t: 1.0 for t in "abcdefgh"}, {"a": 2.0, "h": 0.5}):
        assert stripped.dot(q) <= full.dot(q)


def test_splade_oracle_small_batch():
    rng = np.random.default_rng(7)
    for _ in range(50):
        W = rng.normal(size=(rng.integers(1, 8), rng.integers(1, 6)))
        got, want = splade_term_weights(W), splade_oracle(W.tolist())
        assert got.keys() == want.keys()
        assert all(abs(got[k] - want[k]) <= 1e-12 for k in want)
