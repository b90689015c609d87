"""Ranking effectiveness: nDCG@k, MRR@k, Recall@k and macro-averaged reports.

Conventions follow trec_eval where the choice matters:

* a document is relevant iff its grade is > 0; unjudged docs count as 0;
* nDCG gain is ``2**grade - 1`` with a ``log2(rank + 1)`` discount, and the
  ideal ranking is cut at the same depth k;
* macro averages run over qrels queries having at least one relevant doc;
  queries absent from the run score 0 and queries absent from the qrels are
  ignored.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .dataio import read_qrels, read_run, run_to_rankings
from .search import RankedList

METRICS = ("ndcg", "mrr", "recall")


def _doc_ids(run) -> list[str]:
    if isinstance(run, RankedList):
        return run.doc_ids
    return [h[0] if isinstance(h, tuple) else h for h in run]


def ndcg_at_k(run, qrels: Mapping[str, int], k: int = 10) -> float:
    """``run`` is a RankedList or a ranked sequence of doc ids / (doc id, score);
    ``qrels`` maps doc id -> grade for this query."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    dcg = 0.0
    for i, doc_id in enumerate(_doc_ids(run)[:k]):
        g = qrels.get(doc_id, 0)
        if g > 0:
            dcg += (2**g - 1) / math.log2(i + 2)
    ideal = sorted((g for g in qrels.values() if g > 0), reverse=True)[:k]
    idcg = sum((2**g - 1) / math.log2(i + 2) for i, g in enumerate(ideal))
    return dcg / idcg if idcg > 0 else 0.0


def mrr_at_k(run, qrels: Mapping[str, int], k: int = 10) -> float:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    for i, doc_id in enumerate(_doc_ids(run)[:k]):
        if qrels.get(doc_id, 0) > 0:
            return 1.0 / (i + 1)
    return 0.0


def recall_at_k(run, qrels: Mapping[str, int], k: int = 100) -> float:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    relevant = {d for d, g in qrels.items() if g > 0}
    if not relevant:
        return 0.0
    return len(relevant.intersection(_doc_ids(run)[:k])) / len(relevant)


_FUNCS = {"ndcg": ndcg_at_k, "mrr": mrr_at_k, "recall": recall_at_k}


@dataclass
class MetricReport:
    ks: tuple[int, ...]
    per_query: dict[str, dict[str, float]] = field(default_factory=dict)  # "ndcg@10" -> qid -> value
    means: dict[str, float] = field(default_factory=dict)
    num_queries: int = 0
    excluded_queries: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "ks": list(self.ks),
                "means": self.means,
                "num_queries": self.num_queries,
                "excluded_queries": self.excluded_queries,
                "per_query": self.per_query,
            },
            indent=2,
            sort_keys=True,
        ) + "\n"

    def to_tsv(self) -> str:
        lines = ["metric\tvalue"]
        lines += [f"{m}\t{v:.6f}" for m, v in self.means.items()]
        lines += [f"num_queries\t{self.num_queries}", f"excluded_queries\t{self.excluded_queries}"]
        return "\n".join(lines) + "\n"

    def write(self, out_dir, stem: str = "metrics") -> None:
        out_dir = Path(out_dir)
        (out_dir / f"{stem}.json").write_text(self.to_json(), encoding="utf-8")
        (out_dir / f"{stem}.tsv").write_text(self.to_tsv(), encoding="utf-8")


def evaluate(rankings: Mapping[str, Sequence], qrels: Mapping[str, Mapping[str, int]],
             ks: Iterable[int] = (10,), metrics: Iterable[str] = METRICS) -> MetricReport:
    ks = tuple(sorted(set(ks)))
    names = [f"{m}@{k}" for m in metrics for k in ks]
    report = MetricReport(ks, {n: {} for n in names})
    for qid in sorted(qrels):
        judged = qrels[qid]
        if not any(g > 0 for g in judged.values()):
            report.excluded_queries += 1
            continue
        run = rankings.get(qid, [])
        for m in metrics:
            for k in ks:
                report.per_query[f"{m}@{k}"][qid] = _FUNCS[m](run, judged, k)
    report.num_queries = len(qrels) - report.excluded_queries
    for n in names:
        vals = report.per_query[n]
        report.means[n] = sum(vals.values()) / len(vals) if vals else 0.0
    return report


def evaluate_run(run_path, qrels_path, ks: Iterable[int] = (10,)) -> MetricReport:
    """Score a TREC run file against a BEIR qrels file."""
    return evaluate(run_to_rankings(read_run(run_path)), read_qrels(qrels_path), ks)
