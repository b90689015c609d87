"""Inverted impact index: construction and on-disk segments.

A segment is a directory holding three files::

    meta.json     corpus statistics, build config echo, postings checksum
    docs.tsv      ordinal <TAB> external doc id <TAB> doc length
    postings.bin  magic b"SPIX1", u32 token count, then per token:
                  u32 token byte length, utf-8 token,
                  u32 posting count n, n x i32 doc ordinals, n x i32 impacts

All integers are little-endian.  Doc ordinals follow the lexicographic order
of external doc ids and tokens are stored in lexicographic order, so the bytes
depend only on the corpus content and the build config.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .analyzer import Analyzer
from .errors import IndexBuildError, SegmentLoadError
from .representation import TermWeightVector

log = logging.getLogger(__name__)

MAGIC = b"SPIX1"
FORMAT = "SPIX1"
_U32 = struct.Struct("<I")
_I32_MAX = 2**31 - 1


@dataclass
class ImpactIndex:
    """Immutable once built.

    ``doc_lengths`` holds analyzed token counts for lexical indexes and the
    number of stored terms for indexes built from weight vectors.
    """

    tokens: tuple[str, ...]
    postings: list[tuple[np.ndarray, np.ndarray]]
    doc_ids: tuple[str, ...]
    doc_lengths: np.ndarray
    kind: str = "impact"
    config: dict = field(default_factory=dict)
    token_ids: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.token_ids = {t: i for i, t in enumerate(self.tokens)}

    @property
    def num_docs(self) -> int:
        return len(self.doc_ids)

    @property
    def total_tokens(self) -> int:
        return int(self.doc_lengths.sum())

    @property
    def avgdl(self) -> float:
        return self.total_tokens / self.num_docs

    def df(self, token: str) -> int:
        i = self.token_ids.get(token)
        return 0 if i is None else len(self.postings[i][0])

    def posting_list(self, token: str):
        """(ordinals, impacts) arrays for ``token``, or None if unindexed."""
        i = self.token_ids.get(token)
        return None if i is None else self.postings[i]

    @property
    def num_postings(self) -> int:
        return sum(len(o) for o, _ in self.postings)

    def stats(self) -> dict:
        return {
            "num_docs": self.num_docs,
            "total_tokens": self.total_tokens,
            "avgdl": self.avgdl,
            "num_tokens": len(self.tokens),
            "num_postings": self.num_postings,
        }

    def doc_vectors(self) -> dict[str, TermWeightVector]:
        """Forward view: external doc id -> its stored impacts."""
        fwd = [dict() for _ in self.doc_ids]
        for tok, (ords, imps) in zip(self.tokens, self.postings):
            for o, w in zip(ords.tolist(), imps.tolist()):
                fwd[o][tok] = w
        return {d: TermWeightVector(v, d) for d, v in zip(self.doc_ids, fwd)}

    def __eq__(self, other):
        if not isinstance(other, ImpactIndex):
            return NotImplemented
        return (
            self.tokens == other.tokens
            and self.doc_ids == other.doc_ids
            and self.kind == other.kind
            and self.config == other.config
            and np.array_equal(self.doc_lengths, other.doc_lengths)
            and all(
                np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
                for a, b in zip(self.postings, other.postings)
            )
            and len(self.postings) == len(other.postings)
        )


def _integral_impact(doc_id, token, w) -> int:
    if isinstance(w, float):
        if not w.is_integer():
            raise IndexBuildError(
                f"doc {doc_id!r}: impact for {token!r} is {w!r}; quantize float weights before indexing"
            )
        w = int(w)
    if not isinstance(w, (int, np.integer)) or w < 1 or w > _I32_MAX:
        raise IndexBuildError(f"doc {doc_id!r}: impact for {token!r} must be a positive integer, got {w!r}")
    return int(w)


def _assemble(docs: dict, lengths: dict, kind: str, config: dict) -> ImpactIndex:
    if not docs:
        raise IndexBuildError("empty corpus")
    doc_ids = tuple(sorted(docs))
    per_token: dict[str, tuple[list, list]] = {}
    for ordinal, doc_id in enumerate(doc_ids):
        for tok, w in docs[doc_id].items():
            if not isinstance(tok, str):
                raise IndexBuildError(
                    f"doc {doc_id!r}: token {tok!r} is not a string; decode id-keyed vectors first"
                )
            lists = per_token.get(tok)
            if lists is None:
                lists = per_token[tok] = ([], [])
            lists[0].append(ordinal)
            lists[1].append(_integral_impact(doc_id, tok, w))
    tokens = tuple(sorted(per_token))
    postings = [
        (np.asarray(per_token[t][0], dtype=np.int32), np.asarray(per_token[t][1], dtype=np.int32))
        for t in tokens
    ]
    dl = np.asarray([lengths[d] for d in doc_ids], dtype=np.int64)
    return ImpactIndex(tokens, postings, doc_ids, dl, kind=kind, config=dict(config))


def _iter_vectors(vectors):
    for item in vectors:
        if isinstance(item, TermWeightVector):
            yield item.source_id, item
        else:
            doc_id, vec = item
            yield doc_id, vec


def build_impact_index(vectors: Iterable, config: dict | None = None) -> ImpactIndex:
    """Index quantized vectors given as ``TermWeightVector`` (id in ``source_id``)
    or ``(doc_id, vector)`` pairs."""
    docs, lengths = {}, {}
    for doc_id, vec in _iter_vectors(vectors):
        if doc_id in docs:
            raise IndexBuildError(f"duplicate doc id {doc_id!r}")
        _check_doc_id(doc_id)
        docs[doc_id] = vec
        lengths[doc_id] = len(vec)
    return _assemble(docs, lengths, "impact", config or {})


def build_lexical_index(corpus: Iterable, analyzer: Analyzer, config: dict | None = None) -> ImpactIndex:
    """Raw term-frequency index over ``title + " " + text``.

    ``corpus`` yields ``(doc_id, title, text)`` triples; a missing title is
    treated as the empty string.
    """
    docs, lengths = {}, {}
    for doc_id, title, text in corpus:
        if doc_id in docs:
            raise IndexBuildError(f"duplicate doc id {doc_id!r}")
        _check_doc_id(doc_id)
        toks = analyzer(f"{title or ''} {text or ''}")
        docs[doc_id] = Counter(toks)
        lengths[doc_id] = len(toks)
    cfg = {**analyzer.describe(), **(config or {})}
    return _assemble(docs, lengths, "lexical", cfg)


def _check_doc_id(doc_id):
    if not isinstance(doc_id, str) or not doc_id or any(c in doc_id for c in "\t\r\n"):
        raise IndexBuildError(f"invalid doc id {doc_id!r}: must be a non-empty string without tabs/newlines")


# --- segments ------------------------------------------------------------

def _postings_bytes(index: ImpactIndex) -> bytes:
    parts = [MAGIC, _U32.pack(len(index.tokens))]
    for tok, (ords, imps) in zip(index.tokens, index.postings):
        raw = tok.encode("utf-8")
        parts += [_U32.pack(len(raw)), raw, _U32.pack(len(ords)),
                  ords.astype("<i4").tobytes(), imps.astype("<i4").tobytes()]
    return b"".join(parts)


def write_segment(index: ImpactIndex, path) -> int:
    """Persist ``index`` under directory ``path``; returns the segment size in bytes."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    blob = _postings_bytes(index)
    with open(path / "postings.bin", "wb") as f:
        f.write(blob)
    with open(path / "docs.tsv", "w", encoding="utf-8", newline="\n") as f:
        for o, (d, n) in enumerate(zip(index.doc_ids, index.doc_lengths.tolist())):
            f.write(f"{o}\t{d}\t{n}\n")
    meta = {
        "format": FORMAT,
        "kind": index.kind,
        "config": index.config,
        **index.stats(),
        "postings_bytes": len(blob),
        "postings_sha256": hashlib.sha256(blob).hexdigest(),
    }
    with open(path / "meta.json", "w", encoding="utf-8", newline="\n") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    return segment_size_bytes(path)


def segment_size_bytes(path) -> int:
    path = Path(path)
    return sum((path / n).stat().st_size for n in ("meta.json", "docs.tsv", "postings.bin"))


def _parse_postings(blob: bytes, n_docs: int):
    if blob[: len(MAGIC)] != MAGIC:
        raise SegmentLoadError(f"bad magic {blob[:len(MAGIC)]!r}, expected {MAGIC!r}")
    pos = len(MAGIC)

    def take(n):
        nonlocal pos
        if pos + n > len(blob):
            raise SegmentLoadError(f"postings.bin truncated at byte {pos} (need {n} more)")
        chunk = blob[pos:pos + n]
        pos += n
        return chunk

    (n_tokens,) = _U32.unpack(take(4))
    tokens, postings = [], []
    for _ in range(n_tokens):
        (tlen,) = _U32.unpack(take(4))
        tokens.append(take(tlen).decode("utf-8"))
        (n,) = _U32.unpack(take(4))
        ords = np.frombuffer(take(4 * n), dtype="<i4").astype(np.int32)
        imps = np.frombuffer(take(4 * n), dtype="<i4").astype(np.int32)
        if n and (ords[0] < 0 or ords[-1] >= n_docs or np.any(np.diff(ords) <= 0)):
            raise SegmentLoadError(f"posting list for {tokens[-1]!r} is unsorted or out of range")
        if n and imps.min() < 1:
            raise SegmentLoadError(f"posting list for {tokens[-1]!r} has non-positive impacts")
        postings.append((ords, imps))
    if pos != len(blob):
        raise SegmentLoadError(f"{len(blob) - pos} trailing bytes after last posting list")
    return tuple(tokens), postings


def read_segment(path) -> ImpactIndex:
    path = Path(path)
    try:
        with open(path / "meta.json", encoding="utf-8") as f:
            meta = json.load(f)
        blob = (path / "postings.bin").read_bytes()
        with open(path / "docs.tsv", encoding="utf-8") as f:
            rows = [line.rstrip("\n").split("\t") for line in f]
    except (OSError, ValueError) as e:
        raise SegmentLoadError(f"cannot read segment at {path}: {e}") from e
    if meta.get("format") != FORMAT:
        raise SegmentLoadError(f"segment format {meta.get('format')!r} is not {FORMAT!r}")
    if hashlib.sha256(blob).hexdigest() != meta.get("postings_sha256"):
        raise SegmentLoadError("postings.bin checksum mismatch (corrupt or truncated)")
    try:
        doc_ids = []
        lengths = []
        for o, row in enumerate(rows):
            if len(row) != 3 or int(row[0]) != o:
                raise ValueError(f"bad docs.tsv row {o + 1}")
            doc_ids.append(row[1])
            lengths.append(int(row[2]))
    except ValueError as e:
        raise SegmentLoadError(str(e)) from e
    tokens, postings = _parse_postings(blob, len(doc_ids))
    index = ImpactIndex(tokens, postings, tuple(doc_ids), np.asarray(lengths, dtype=np.int64),
                        kind=meta.get("kind", "impact"), config=meta.get("config", {}))
    if index.num_docs != meta.get("num_docs") or index.total_tokens != meta.get("total_tokens"):
        raise SegmentLoadError("docs.tsv disagrees with meta.json statistics")
    return index
