"""Query processing over an :class:`~sprint_ir.index.ImpactIndex`.

Every ranking produced here is ordered by score descending with ties broken
by ascending external doc id.  Because doc ordinals are assigned in doc-id
order, the tie-break is simply ascending ordinal inside the index.
"""

from __future__ import annotations

import heapq
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .analyzer import Analyzer
from .errors import InvalidInputError
from .index import ImpactIndex
from .representation import TermWeightVector

log = logging.getLogger(__name__)


@dataclass
class RankedList:
    query_id: str
    hits: list[tuple[str, float]] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for i, (doc_id, score) in enumerate(self.hits):
            if doc_id in seen:
                raise InvalidInputError(f"query {self.query_id!r}: duplicate doc {doc_id!r} in ranking")
            seen.add(doc_id)
            if i and _worse(self.hits[i - 1], (doc_id, score)):
                raise InvalidInputError(f"query {self.query_id!r}: hits not in (score desc, doc id asc) order at rank {i + 1}")

    def __len__(self):
        return len(self.hits)

    @property
    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.hits]


def _worse(a, b) -> bool:
    """True if hit ``a`` ranks strictly below hit ``b``."""
    return a[1] < b[1] or (a[1] == b[1] and a[0] > b[0])


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 0.9
    b: float = 0.4

    def __post_init__(self):
        if not self.k1 > 0:
            raise InvalidInputError(f"bm25 k1 must be > 0, got {self.k1}")
        if not 0 <= self.b <= 1:
            raise InvalidInputError(f"bm25 b must be in [0, 1], got {self.b}")


class TopK:
    """Bounded min-heap keeping the k best ``(doc_id, score)`` pairs."""

    class _Entry:
        __slots__ = ("score", "doc_id")

        def __init__(self, score, doc_id):
            self.score = score
            self.doc_id = doc_id

        def __lt__(self, other):
            # heap root is the worst entry: lowest score, then largest doc id
            return (self.score, other.doc_id) < (other.score, self.doc_id)

    def __init__(self, k: int):
        if k < 1:
            raise InvalidInputError(f"k must be >= 1, got {k}")
        self.k = k
        self._heap: list = []

    def push(self, doc_id: str, score) -> None:
        entry = self._Entry(score, doc_id)
        if len(self._heap) < self.k:
            heapq.heappush(self._heap, entry)
        elif self._heap[0] < entry:
            heapq.heapreplace(self._heap, entry)

    def ranked(self) -> list[tuple[str, float]]:
        return [(e.doc_id, e.score) for e in sorted(self._heap, reverse=True)]


def _select(index: ImpactIndex, scores: np.ndarray, k: int) -> list[tuple[str, float]]:
    cand = np.flatnonzero(scores > 0)
    s = scores[cand]
    if len(cand) > k:
        threshold = -np.partition(-s, k - 1)[k - 1]
        keep = s >= threshold
        cand, s = cand[keep], s[keep]
    order = np.lexsort((cand, -s))[:k]
    ids = index.doc_ids
    return [(ids[o], v) for o, v in zip(cand[order].tolist(), s[order].tolist())]


def search_impact(query: Mapping, index: ImpactIndex, k: int, query_id: str = "") -> RankedList:
    """Exhaustive impact dot product: score(d) = sum over shared tokens of q_t * impact_td.

    Integer query weights give exact integer scores.
    """
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    integral = all(isinstance(w, (int, np.integer)) for w in query.values())
    scores = np.zeros(index.num_docs, dtype=np.int64 if integral else np.float64)
    missing = 0
    for tok in sorted(query, key=str):
        pl = index.posting_list(tok)
        if pl is None:
            missing += 1
            continue
        ords, imps = pl
        scores[ords] += imps.astype(scores.dtype) * query[tok]
    if missing:
        log.debug("query %r: %d tokens absent from index", query_id, missing)
    return RankedList(query_id or getattr(query, "source_id", ""), _select(index, scores, k))


def bm25_idf(n_docs: int, df: int) -> float:
    return math.log(1 + (n_docs - df + 0.5) / (df + 0.5))


def search_bm25(query_text: str, index: ImpactIndex, params: Bm25Params = Bm25Params(), k: int = 1000,
                query_id: str = "", analyzer: Analyzer | None = None) -> RankedList:
    """Okapi BM25 over a lexical index (no ``k1 + 1`` numerator factor).

    A term repeated in the query contributes once per occurrence.
    """
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    if index.kind != "lexical":
        raise InvalidInputError("search_bm25 needs an index built by build_lexical_index")
    if analyzer is None:
        analyzer = Analyzer.from_config(index.config)
    qtf = Counter(analyzer(query_text))
    scores = np.zeros(index.num_docs, dtype=np.float64)
    n, avgdl = index.num_docs, index.avgdl
    for tok in sorted(qtf):
        pl = index.posting_list(tok)
        if pl is None:
            continue
        ords, tfs = pl
        tf = tfs.astype(np.float64)
        norm = params.k1 * (1 - params.b + params.b * index.doc_lengths[ords] / avgdl)
        scores[ords] += qtf[tok] * bm25_idf(n, len(ords)) * (tf / (tf + norm))
    return RankedList(query_id, _select(index, scores, k))


def rerank(candidates: RankedList, doc_vectors: Mapping[str, Mapping], query: Mapping,
           depth: int) -> RankedList:
    """Rescore the first ``depth`` candidates by dot product with ``query``.

    Candidates past ``depth`` are dropped.
    """
    if depth < 1:
        raise InvalidInputError(f"rerank depth must be >= 1, got {depth}")
    top = TopK(depth)
    q = query if isinstance(query, TermWeightVector) else TermWeightVector(query)
    for doc_id, _ in candidates.hits[:depth]:
        try:
            vec = doc_vectors[doc_id]
        except KeyError:
            raise InvalidInputError(f"no document vector for candidate {doc_id!r}") from None
        top.push(doc_id, q.dot(vec))
    return RankedList(candidates.query_id, top.ranked())


class ImpactEngine:
    """Query text -> ranking over an impact index, split so encoding can be excluded from timing."""

    def __init__(self, index: ImpactIndex, encode_query: Callable[[str], Mapping], k: int = 1000):
        self.index = index
        self.encode_query = encode_query
        self.k = k

    def encode(self, text: str):
        return self.encode_query(text)

    def search(self, query) -> RankedList:
        return search_impact(query, self.index, self.k)


class Bm25Engine:
    def __init__(self, index: ImpactIndex, params: Bm25Params = Bm25Params(), k: int = 1000):
        self.index = index
        self.params = params
        self.k = k
        self.analyzer = Analyzer.from_config(index.config)

    def encode(self, text: str):
        return text

    def search(self, query) -> RankedList:
        return search_bm25(query, self.index, self.params, self.k, analyzer=self.analyzer)
