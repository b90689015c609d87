"""Sparse term-weight representations and the math that builds them.

Two families of encoders are covered:

* vocabulary-pooling models (SPARTA, SPLADEv2), which score every vocabulary
  entry against a passage and keep the positive ones;
* exact-match encoders (binary and raw term frequency), which only weight
  tokens that actually occur in the text.

Every builder returns a :class:`TermWeightVector`.  Zero weights are never
stored, so ``len(vector)`` is the number of non-zero dimensions.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Iterator, Mapping

import numpy as np

from .errors import InvalidInputError

Token = Hashable


@dataclass(frozen=True)
class Vocabulary:
    """Ordered, duplicate-free list of token strings. Ids are list positions."""

    tokens: tuple[str, ...]
    _ids: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        tokens = tuple(self.tokens)
        object.__setattr__(self, "tokens", tokens)
        if not tokens:
            raise InvalidInputError("vocabulary must contain at least one token")
        ids = {tok: i for i, tok in enumerate(tokens)}
        if len(ids) != len(tokens):
            dupes = sorted(t for t, c in Counter(tokens).items() if c > 1)
            raise InvalidInputError(f"duplicate vocabulary tokens: {dupes[:5]}")
        object.__setattr__(self, "_ids", ids)

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._ids

    def id_of(self, token: str) -> int:
        try:
            return self._ids[token]
        except KeyError:
            raise InvalidInputError(f"token {token!r} not in vocabulary") from None

    def token_of(self, token_id: int) -> str:
        if not 0 <= token_id < len(self.tokens):
            raise InvalidInputError(f"token id {token_id} out of range [0, {len(self.tokens)})")
        return self.tokens[token_id]

    def decode(self, vector: "TermWeightVector") -> "TermWeightVector":
        """Re-key an id-keyed vector by token strings."""
        return TermWeightVector(
            {self.token_of(t): w for t, w in vector.items()}, vector.source_id
        )

    @classmethod
    def from_file(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as f:
            return cls(tuple(line.rstrip("\n") for line in f if line.rstrip("\n")))


class TermWeightVector(Mapping):
    """Immutable sparse map ``token -> weight`` with strictly positive weights.

    Keys are either integer vocabulary ids or token strings; mixing is not
    checked, but the index and the file formats use strings.
    """

    __slots__ = ("_entries", "source_id")

    def __init__(self, entries: Mapping | Iterable | None = None, source_id: str = ""):
        data = dict(entries or {})
        for tok, w in data.items():
            if not isinstance(w, (int, float, np.integer, np.floating)) or isinstance(w, bool):
                raise InvalidInputError(f"weight for {tok!r} is not a number: {w!r}")
            if not math.isfinite(w) or w <= 0:
                raise InvalidInputError(f"weight for {tok!r} must be finite and > 0, got {w!r}")
        self._entries = data
        self.source_id = source_id

    def __getitem__(self, token):
        return self._entries[token]

    def __iter__(self) -> Iterator:
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    def __eq__(self, other):
        if isinstance(other, TermWeightVector):
            return self._entries == other._entries
        return NotImplemented

    def __hash__(self):
        return hash(frozenset(self._entries.items()))

    def __repr__(self):
        return f"TermWeightVector({self._entries!r}, source_id={self.source_id!r})"

    def dot(self, other: Mapping) -> float:
        small, large = (self, other) if len(self) <= len(other) else (other, self)
        return sum(w * large.get(t, 0) for t, w in small.items())

    def with_source(self, source_id: str) -> "TermWeightVector":
        return TermWeightVector(self._entries, source_id)


@dataclass(frozen=True)
class SpartaParams:
    bias: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.bias):
            raise InvalidInputError(f"SPARTA bias must be finite, got {self.bias!r}")


def _as_matrix(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"{name} must be a non-empty 2-d matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def _to_vector(weights: np.ndarray, vocab: Vocabulary | None, source_id: str) -> TermWeightVector:
    if vocab is not None and vocab.size != weights.shape[0]:
        raise InvalidInputError(
            f"vocabulary has {vocab.size} tokens but the scores cover {weights.shape[0]}"
        )
    nz = np.flatnonzero(weights > 0)
    keys = [vocab.tokens[i] for i in nz] if vocab is not None else nz.tolist()
    return TermWeightVector(dict(zip(keys, weights[nz].tolist())), source_id)


def sparta_term_weights(
    input_embeds,
    passage_embeds,
    params: SpartaParams = SpartaParams(),
    vocab: Vocabulary | None = None,
    source_id: str = "",
) -> TermWeightVector:
    """SPARTA passage weights.

    ``input_embeds`` is the |V| x d matrix of vocabulary input embeddings and
    ``passage_embeds`` the l x d contextual embeddings of the passage tokens.
    Each vocabulary entry takes its best dot product with any passage token,
    then ``ln(ReLU(y + bias) + 1)``.
    """
    emb = _as_matrix(input_embeds, "input_embeds")
    ctx = _as_matrix(passage_embeds, "passage_embeds")
    if emb.shape[1] != ctx.shape[1]:
        raise InvalidInputError(
            f"embedding dims disagree: input {emb.shape[1]} vs passage {ctx.shape[1]}"
        )
    matching = (emb @ ctx.T).max(axis=1)
    weights = np.log1p(np.maximum(matching + params.bias, 0.0))
    return _to_vector(weights, vocab, source_id)


def splade_term_weights(
    logits, vocab: Vocabulary | None = None, source_id: str = ""
) -> TermWeightVector:
    """SPLADEv2 weights from a |V| x l matrix of MLM logits.

    weight_i = max_j ln(1 + ReLU(w_ij)); max-pooling runs over passage positions.
    """
    arr = np.asarray(logits, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"logits must be a non-empty |V| x l matrix, got shape {arr.shape}")
    if np.isnan(arr).any():
        raise InvalidInputError("logits contain NaN")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("logits contain infinite values")
    weights = np.log1p(np.maximum(arr, 0.0)).max(axis=1)
    return _to_vector(weights, vocab, source_id)


def _check_ids(token_ids, vocab: Vocabulary | None):
    if vocab is None:
        return
    for t in token_ids:
        if isinstance(t, str):
            vocab.id_of(t)
        else:
            vocab.token_of(t)


def binary_query_weights(query_token_ids: Iterable[Token], vocab: Vocabulary | None = None,
                         source_id: str = "") -> TermWeightVector:
    ids = list(query_token_ids)
    _check_ids(ids, vocab)
    return TermWeightVector(dict.fromkeys(ids, 1.0), source_id)


def tf_term_weights(token_ids: Iterable[Token], vocab: Vocabulary | None = None,
                    source_id: str = "") -> TermWeightVector:
    ids = list(token_ids)
    _check_ids(ids, vocab)
    return TermWeightVector({t: float(c) for t, c in Counter(ids).items()}, source_id)


def strip_expansion_tokens(rep: TermWeightVector, original_token_ids) -> TermWeightVector:
    """Drop every entry whose token does not occur in the original text."""
    keep = set(original_token_ids)
    return TermWeightVector({t: w for t, w in rep.items() if t in keep}, rep.source_id)
