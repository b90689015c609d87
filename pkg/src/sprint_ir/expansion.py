"""Merging external document expansions into passage text.

Expansions are produced offline (docT5query-style generated queries, or
TILDE-style weighted vocabulary tokens) and only appended here.  The original
passage always survives verbatim as a prefix of the expanded text.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .analyzer import Analyzer
from .errors import InvalidInputError
from .representation import TermWeightVector, Vocabulary

DEFAULT_NUM_QUERIES = 20
DEFAULT_TOP_K_TOKENS = 200
KINDS = ("generated-queries", "weighted-tokens")


@dataclass(frozen=True)
class ExpansionRecord:
    doc_id: str
    kind: str
    queries: tuple[str, ...] | None = None
    token_weights: TermWeightVector | None = field(default=None, hash=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown expansion kind {self.kind!r}")
        has_q = self.queries is not None
        has_w = self.token_weights is not None
        if has_q == has_w or has_q != (self.kind == "generated-queries"):
            raise InvalidInputError(f"expansion for {self.doc_id!r}: payload does not match kind {self.kind!r}")


def append_generated_queries(doc_text: str, queries, q: int = DEFAULT_NUM_QUERIES) -> str:
    """Append the first ``q`` generated queries.  Repeats are kept on purpose:
    they act as term-frequency boosts for lexical scoring."""
    if q < 0:
        raise InvalidInputError(f"q must be >= 0, got {q}")
    chosen = list(queries)[:q]
    if not chosen:
        return doc_text
    return doc_text + " " + " ".join(chosen)


def append_top_k_tokens(
    doc_text: str,
    token_weights: Mapping,
    k: int = DEFAULT_TOP_K_TOKENS,
    vocab: Vocabulary | None = None,
    analyzer: Analyzer | None = None,
) -> str:
    """Append the ``k`` heaviest tokens that the passage does not already contain.

    Presence is judged on analyzer output (default ``whitespace-lower``), so a
    token is skipped when any of its analyzed forms occurs in the passage.
    Integer keys are mapped to surface strings through ``vocab``.
    """
    if k < 0:
        raise InvalidInputError(f"k must be >= 0, got {k}")
    if k == 0:
        return doc_text
    analyzer = analyzer or Analyzer("whitespace-lower")
    present = set(analyzer(doc_text))
    surface = []
    for tok, w in token_weights.items():
        if not isinstance(tok, str):
            if vocab is None:
                raise InvalidInputError("integer token ids need a vocabulary to recover surface forms")
            tok = vocab.token_of(tok)
        surface.append((tok, w))
    surface.sort(key=lambda tw: (-tw[1], tw[0]))
    picked = []
    for tok, _ in surface:
        if present.intersection(analyzer(tok)):
            continue
        picked.append(tok)
        if len(picked) == k:
            break
    if not picked:
        return doc_text
    return doc_text + " " + " ".join(picked)


def expand_text(doc_text: str, record: ExpansionRecord | None, q: int = DEFAULT_NUM_QUERIES,
                k: int = DEFAULT_TOP_K_TOKENS, analyzer: Analyzer | None = None) -> str:
    if record is None:
        return doc_text
    if record.kind == "generated-queries":
        return append_generated_queries(doc_text, record.queries, q)
    return append_top_k_tokens(doc_text, record.token_weights, k, analyzer=analyzer)
