"""Readers and writers for BEIR datasets, vector files, expansions, qrels and runs.

All readers stream line by line and raise :class:`ParseError` with the
offending line number.  Duplicate-id detection keeps only the id set in memory.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

from .errors import InvalidInputError, ParseError
from .expansion import ExpansionRecord
from .representation import TermWeightVector
from .search import RankedList


class Document(NamedTuple):
    doc_id: str
    title: str
    text: str


class Query(NamedTuple):
    query_id: str
    text: str


class RunEntry(NamedTuple):
    query_id: str
    doc_id: str
    rank: int
    score: float
    tag: str


def iter_jsonl(path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(path, line_no, f"invalid JSON: {e.msg}") from None
            if not isinstance(obj, dict):
                raise ParseError(path, line_no, "expected a JSON object")
            yield line_no, obj


def _string_field(path, line_no, obj, key, required=True):
    if key not in obj or obj[key] is None:
        if required:
            raise ParseError(path, line_no, f"missing field {key!r}")
        return ""
    val = obj[key]
    if not isinstance(val, str):
        raise ParseError(path, line_no, f"field {key!r} must be a string")
    return val


def _unique(path, line_no, seen: set, key: str, what: str):
    if key in seen:
        raise ParseError(path, line_no, f"duplicate {what} id {key!r}")
    seen.add(key)


def read_corpus(path) -> Iterator[Document]:
    """BEIR ``corpus.jsonl``: ``_id``, optional ``title``, ``text``; other fields ignored."""
    seen: set = set()
    for line_no, obj in iter_jsonl(path):
        doc_id = _string_field(path, line_no, obj, "_id")
        if not doc_id:
            raise ParseError(path, line_no, "empty '_id'")
        _unique(path, line_no, seen, doc_id, "doc")
        yield Document(doc_id, _string_field(path, line_no, obj, "title", required=False),
                       _string_field(path, line_no, obj, "text"))


def read_queries(path) -> Iterator[Query]:
    seen: set = set()
    for line_no, obj in iter_jsonl(path):
        qid = _string_field(path, line_no, obj, "_id")
        _unique(path, line_no, seen, qid, "query")
        yield Query(qid, _string_field(path, line_no, obj, "text"))


def read_qrels(path) -> dict[str, dict[str, int]]:
    """BEIR qrels TSV (``query-id corpus-id score`` with one header line)."""
    qrels: dict[str, dict[str, int]] = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if line_no == 1 or not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise ParseError(path, line_no, f"expected 3 tab-separated columns, got {len(parts)}")
            qid, did, grade = parts
            try:
                g = int(grade)
            except ValueError:
                raise ParseError(path, line_no, f"relevance grade {grade!r} is not an integer") from None
            if g < 0:
                raise ParseError(path, line_no, f"negative relevance grade {g}")
            judged = qrels.setdefault(qid, {})
            if did in judged:
                raise ParseError(path, line_no, f"duplicate judgement for ({qid!r}, {did!r})")
            judged[did] = g
    return qrels


def write_qrels(path, qrels: dict[str, dict[str, int]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("query-id\tcorpus-id\tscore\n")
        for qid, judged in qrels.items():
            for did, g in judged.items():
                f.write(f"{qid}\t{did}\t{g}\n")


def _parse_weight(path, line_no, tok, w):
    if isinstance(w, bool) or not isinstance(w, (int, float)) or not math.isfinite(w) or w <= 0:
        raise ParseError(path, line_no, f"weight for {tok!r} must be a positive number, got {w!r}")
    return w


def _parse_vector(path, line_no, obj, key="vector") -> TermWeightVector:
    vec = obj.get(key)
    if not isinstance(vec, dict):
        raise ParseError(path, line_no, f"field {key!r} must be an object of token -> weight")
    return TermWeightVector({t: _parse_weight(path, line_no, t, w) for t, w in vec.items()})


def read_vectors(path) -> Iterator[TermWeightVector]:
    """JSON Lines ``{"id": ..., "vector": {token: weight}}``; ``source_id`` carries the id."""
    seen: set = set()
    for line_no, obj in iter_jsonl(path):
        vid = _string_field(path, line_no, obj, "id")
        _unique(path, line_no, seen, vid, "vector")
        yield _parse_vector(path, line_no, obj).with_source(vid)


def format_vector(vector: TermWeightVector, vector_id: str | None = None) -> str:
    vid = vector.source_id if vector_id is None else vector_id
    # repr-precision floats, insertion order kept
    return json.dumps({"id": vid, "vector": dict(vector.items())}, ensure_ascii=False)


def write_vectors(path, vectors: Iterable[TermWeightVector]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for vec in vectors:
            f.write(format_vector(vec) + "\n")
            n += 1
    return n


def read_expansions(path) -> Iterator[ExpansionRecord]:
    """``{"id", "queries": [...]}`` or ``{"id", "vector": {...}}`` per line."""
    seen: set = set()
    for line_no, obj in iter_jsonl(path):
        did = _string_field(path, line_no, obj, "id")
        _unique(path, line_no, seen, did, "expansion")
        if "queries" in obj and "vector" in obj:
            raise ParseError(path, line_no, "expansion line has both 'queries' and 'vector'")
        if "queries" in obj:
            qs = obj["queries"]
            if not isinstance(qs, list) or not all(isinstance(q, str) for q in qs):
                raise ParseError(path, line_no, "'queries' must be a list of strings")
            yield ExpansionRecord(did, "generated-queries", queries=tuple(qs))
        elif "vector" in obj:
            yield ExpansionRecord(did, "weighted-tokens", token_weights=_parse_vector(path, line_no, obj))
        else:
            raise ParseError(path, line_no, "expansion line needs 'queries' or 'vector'")


def write_expansions(path, records: Iterable[ExpansionRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for r in records:
            if r.kind == "generated-queries":
                obj = {"id": r.doc_id, "queries": list(r.queries)}
            else:
                obj = {"id": r.doc_id, "vector": dict(r.token_weights.items())}
            f.write(json.dumps(obj, ensure_ascii=False) + "\n")


def format_run_lines(ranking: RankedList, tag: str) -> list[str]:
    return [
        f"{ranking.query_id} Q0 {doc_id} {rank} {float(score):.6f} {tag}"
        for rank, (doc_id, score) in enumerate(ranking.hits, 1)
    ]


def write_run(path, runs: Iterable[RankedList], tag: str) -> None:
    if not tag or any(c.isspace() for c in tag):
        raise InvalidInputError(f"run tag must be a non-empty token without whitespace, got {tag!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for ranking in runs:
            for line in format_run_lines(ranking, tag):
                f.write(line + "\n")


def read_run(path) -> list[RunEntry]:
    entries: list[RunEntry] = []
    last: dict[str, RunEntry] = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise ParseError(path, line_no, f"expected 6 columns, got {len(parts)}")
            qid, _, did, rank, score, tag = parts
            try:
                entry = RunEntry(qid, did, int(rank), float(score), tag)
            except ValueError:
                raise ParseError(path, line_no, "rank must be an integer and score a number") from None
            prev = last.get(qid)
            expected = 1 if prev is None else prev.rank + 1
            if entry.rank != expected:
                raise ParseError(path, line_no, f"query {qid!r}: rank {entry.rank}, expected {expected}")
            if prev is not None and entry.score > prev.score:
                raise ParseError(path, line_no, f"query {qid!r}: scores increase at rank {entry.rank}")
            last[qid] = entry
            entries.append(entry)
    return entries


def run_to_rankings(entries: Iterable[RunEntry]) -> dict[str, list[tuple[str, float]]]:
    """Group run entries by query, keeping file order (which is rank order)."""
    out: dict[str, list[tuple[str, float]]] = {}
    for e in entries:
        out.setdefault(e.query_id, []).append((e.doc_id, e.score))
    return out


class BeirDataset(NamedTuple):
    corpus: Path
    queries: Path
    qrels: Path


def beir_paths(data_dir, split: str = "test") -> BeirDataset:
    d = Path(data_dir)
    return BeirDataset(d / "corpus.jsonl", d / "queries.jsonl", d / "qrels" / f"{split}.tsv")
