"""Sparsity statistics, query-latency benchmarking and Pareto reporting."""

from __future__ import annotations

import math
import statistics
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from threadpoolctl import threadpool_info, threadpool_limits

from .errors import InvalidInputError

BIN_WIDTH = 5


@dataclass
class SparsityStats:
    count: int
    mean: float
    histogram: dict[int, int] = field(default_factory=dict)

    def table_row(self, name: str) -> str:
        return f"{name}\t{self.mean:.1f}"


def sparsity_stats(vectors: Iterable) -> SparsityStats:
    """Average number of stored (non-zero) entries per vector."""
    sizes = Counter(len(v) for v in vectors)
    n = sum(sizes.values())
    if n == 0:
        raise InvalidInputError("no vectors")
    total = sum(size * c for size, c in sizes.items())
    return SparsityStats(n, total / n, dict(sorted(sizes.items())))


@dataclass
class LatencyBin:
    lo: int
    hi: int
    mean_ms: float
    std_ms: float
    n: int

    @property
    def midpoint(self) -> float:
        return (self.lo + self.hi) / 2


@dataclass
class LatencyReport:
    bins: list[LatencyBin]
    correlation: float | None
    per_query_ms: dict[str, float]
    single_threaded: bool

    def to_tsv(self) -> str:
        rows = ["bin_lo\tbin_hi\tmean_ms\tstd_ms\tn"]
        rows += [f"{b.lo}\t{b.hi}\t{b.mean_ms:.4f}\t{b.std_ms:.4f}\t{b.n}" for b in self.bins]
        return "\n".join(rows) + "\n"


def word_count(text: str) -> int:
    return len(text.split())


def bin_queries(lengths: dict[str, int], width: int = BIN_WIDTH) -> list[tuple[int, int, list[str]]]:
    """Contiguous half-open ``[lo, lo + width)`` bins starting at the shortest query."""
    if not lengths:
        return []
    lo = min(lengths.values())
    n_bins = (max(lengths.values()) - lo) // width + 1
    members: list[list[str]] = [[] for _ in range(n_bins)]
    for qid, n in lengths.items():
        members[(n - lo) // width].append(qid)
    return [(lo + i * width, lo + (i + 1) * width, m) for i, m in enumerate(members)]


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    if len(xs) < 2:
        return None
    mx, my = sum(xs) / len(xs), sum(ys) / len(ys)
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    if sxx == 0 or syy == 0:
        return None
    return sxy / math.sqrt(sxx * syy)


def _blas_single_threaded() -> bool:
    return all(info.get("num_threads", 1) == 1 for info in threadpool_info())


def latency_benchmark(queries, engine, repetitions: int = 3,
                      clock: Callable[[], float] = time.perf_counter) -> LatencyReport:
    """Time ``engine.search`` per query, single-threaded, and bin by word count.

    ``queries`` yields ``(query_id, text)``.  ``engine`` exposes ``encode(text)``
    (untimed) and ``search(encoded)`` (timed).  Each query's latency is the
    median over ``repetitions`` runs after one untimed warm-up pass.  The
    correlation is Pearson's r between bin means and bin midpoints, or None when
    fewer than three bins are non-empty or either side is constant.
    """
    if repetitions < 3:
        raise InvalidInputError(f"repetitions must be >= 3, got {repetitions}")
    queries = list(queries)
    if not queries:
        raise InvalidInputError("no queries to benchmark")
    encoded = {qid: engine.encode(text) for qid, text in queries}
    lengths = {qid: word_count(text) for qid, text in queries}
    timings: dict[str, list[float]] = {qid: [] for qid, _ in queries}
    single = True
    with threadpool_limits(limits=1):
        single &= _blas_single_threaded()
        for qid, _ in queries:
            engine.search(encoded[qid])
        for _ in range(repetitions):
            for qid, _ in queries:
                threads_before = threading.active_count()
                t0 = clock()
                engine.search(encoded[qid])
                t1 = clock()
                single &= threading.active_count() == threads_before
                timings[qid].append((t1 - t0) * 1000.0)
        single &= _blas_single_threaded()
    per_query = {qid: statistics.median(ts) for qid, ts in timings.items()}
    bins = []
    for lo, hi, members in bin_queries(lengths):
        vals = [per_query[q] for q in members]
        if vals:
            bins.append(LatencyBin(lo, hi, statistics.fmean(vals), statistics.pstdev(vals), len(vals)))
        else:
            bins.append(LatencyBin(lo, hi, math.nan, math.nan, 0))
    filled = [b for b in bins if b.n]
    corr = None
    if len(filled) >= 3:
        corr = pearson([b.midpoint for b in filled], [b.mean_ms for b in filled])
    return LatencyReport(bins, corr, per_query, single)


@dataclass
class ParetoRecord:
    system: str
    latency_ms: float
    ndcg10: float
    index_mb: float

    def __post_init__(self):
        for name in ("latency_ms", "ndcg10", "index_mb"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise InvalidInputError(f"{self.system}: {name} must be finite and >= 0, got {v!r}")


def dominates(a: ParetoRecord, b: ParetoRecord) -> bool:
    """Lower latency without lower nDCG, or same latency with higher nDCG."""
    return (a.latency_ms < b.latency_ms and a.ndcg10 >= b.ndcg10) or (
        a.latency_ms == b.latency_ms and a.ndcg10 > b.ndcg10
    )


def pareto_table(records: Sequence[ParetoRecord]) -> list[tuple[ParetoRecord, bool]]:
    return [(r, not any(dominates(o, r) for o in records if o is not r)) for r in records]


def format_pareto_tsv(rows: Iterable[tuple[ParetoRecord, bool]]) -> str:
    out = ["system\tlatency_ms\tndcg10\tindex_mb\tfrontier"]
    for r, front in rows:
        out.append(f"{r.system}\t{r.latency_ms:.3f}\t{r.ndcg10:.4f}\t{r.index_mb:.3f}\t{int(front)}")
    return "\n".join(out) + "\n"


def read_pareto_records(path) -> list[ParetoRecord]:
    recs = []
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n").split("\t")
        for line_no, line in enumerate(f, 2):
            if not line.strip():
                continue
            row = dict(zip(header, line.rstrip("\n").split("\t")))
            try:
                recs.append(ParetoRecord(row["system"], float(row["latency_ms"]),
                                         float(row["ndcg10"]), float(row["index_mb"])))
            except (KeyError, ValueError) as e:
                raise InvalidInputError(f"{path}:{line_no}: bad pareto row ({e})") from None
    return recs
