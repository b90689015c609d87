"""The five-step inference pipeline: encode -> quantize -> index -> search -> evaluate.

Each step reads and writes plain files under ``output_dir`` so the steps can
be run one by one (CLI subcommands) or chained by :func:`aio_run`::

    corpus.vectors.jsonl / queries.vectors.jsonl       encode
    corpus.text.jsonl                                  encode (bm25 / rerank first stage)
    corpus.quantized.jsonl / queries.quantized.jsonl   quantize
    segment/ , segment-lexical/                        index
    run.trec                                           search
    metrics.json / metrics.tsv                         evaluate
    manifest.json                                      every step

Encoders that need a neural model read its outputs from ``data_dir``:

``vector-file``  ``vectors/corpus.jsonl`` and optional ``vectors/queries.jsonl``
``splade-file``  ``splade/vocab.txt``, ``splade/corpus.jsonl`` with ``{"id", "logits"}``
                 (|V| x l), optional ``splade/queries.jsonl`` in the same shape
``sparta-file``  ``sparta/vocab.txt``, ``sparta/input_embeds.npy`` (|V| x d),
                 ``sparta/passages.jsonl`` with ``{"id", "embeds"}`` (l x d),
                 optional ``sparta/params.json`` with ``{"bias": b}``

Queries fall back to binary weights over analyzed query tokens whenever no
query-side file exists.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from itertools import islice
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from . import dataio
from .analyzer import MODES as ANALYZER_MODES, Analyzer
from .errors import ConfigError, ParseError, SprintError
from .expansion import DEFAULT_NUM_QUERIES, DEFAULT_TOP_K_TOKENS, KINDS as EXPANSION_KINDS, expand_text
from .index import build_impact_index, build_lexical_index, read_segment, segment_size_bytes, write_segment
from .metrics import MetricReport, evaluate
from .quantization import METHODS as QUANT_METHODS, QuantizationConfig, quantize_vector
from .representation import (
    SpartaParams,
    TermWeightVector,
    Vocabulary,
    binary_query_weights,
    sparta_term_weights,
    splade_term_weights,
    tf_term_weights,
)
from .search import Bm25Params, rerank, search_bm25, search_impact

log = logging.getLogger(__name__)

ENCODERS = ("binary", "tf", "bm25", "sparta-file", "splade-file", "vector-file")
FIRST_STAGES = ("bm25",)
STEPS = ("encode", "quantize", "index", "search", "evaluate")
EVAL_KS = (10, 100)
RUN_TAG = "sprint"
SHARD_SIZE = 256


@dataclass(frozen=True)
class PipelineConfig:
    encoder_name: str
    data_dir: str
    output_dir: str
    do_quantization: bool = True
    quantization_method: str = "range-nbits"
    original_score_range: float = 5.0
    quantization_nbits: int = 8
    topic_split: str = "test"
    k: int = 1000
    expansion_kind: str | None = None
    expansion_file: str | None = None
    expansion_q: int = DEFAULT_NUM_QUERIES
    expansion_topk: int = DEFAULT_TOP_K_TOKENS
    rerank_depth: int | None = None
    first_stage: str | None = None
    bm25_k1: float = 0.9
    bm25_b: float = 0.4
    analyzer: str = "english-porter"
    threads: int = 1

    def __post_init__(self):
        if self.encoder_name not in ENCODERS:
            raise ConfigError(f"unknown encoder {self.encoder_name!r}; expected one of {ENCODERS}")
        if self.quantization_method not in QUANT_METHODS:
            raise ConfigError(f"unknown quantization method {self.quantization_method!r}")
        if self.analyzer not in ANALYZER_MODES:
            raise ConfigError(f"unknown analyzer {self.analyzer!r}")
        if self.k < 1 or self.threads < 1:
            raise ConfigError("k and threads must be >= 1")
        if (self.expansion_kind is None) != (self.expansion_file is None):
            raise ConfigError("expansion needs both --expansion-kind and --expansion-file")
        if self.expansion_kind is not None and self.expansion_kind not in EXPANSION_KINDS:
            raise ConfigError(f"unknown expansion kind {self.expansion_kind!r}")
        if self.expansion_q < 0 or self.expansion_topk < 0:
            raise ConfigError("expansion q / top-k must be >= 0")
        if (self.rerank_depth is None) != (self.first_stage is None):
            raise ConfigError("reranking needs both --first-stage and --rerank-depth")
        if self.first_stage is not None:
            if self.first_stage not in FIRST_STAGES:
                raise ConfigError(f"unknown first stage {self.first_stage!r}; expected one of {FIRST_STAGES}")
            if self.rerank_depth < 1:
                raise ConfigError("--rerank-depth must be >= 1")
            if self.encoder_name == "bm25":
                raise ConfigError("the bm25 encoder cannot rerank its own first stage")
        try:
            self.quantization()
            self.bm25_params()
        except SprintError as e:
            raise ConfigError(str(e)) from e

    def quantization(self) -> QuantizationConfig:
        return QuantizationConfig(self.quantization_method, float(self.original_score_range),
                                  int(self.quantization_nbits))

    def bm25_params(self) -> Bm25Params:
        return Bm25Params(self.bm25_k1, self.bm25_b)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @property
    def uses_impact_index(self) -> bool:
        return self.encoder_name != "bm25"

    @property
    def needs_lexical_index(self) -> bool:
        return self.encoder_name == "bm25" or self.first_stage == "bm25"

    @property
    def text_encoder(self) -> bool:
        return self.encoder_name in ("binary", "tf", "bm25")


class StepError(SprintError):
    def __init__(self, step: str, cause: BaseException):
        self.step = step
        self.cause = cause
        super().__init__(f"step '{step}' failed: {type(cause).__name__}: {cause}")


# --- file layout -----------------------------------------------------------

class Layout:
    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self.data = Path(cfg.data_dir)
        self.beir = dataio.beir_paths(self.data, cfg.topic_split)

    corpus_vectors = property(lambda s: s.out / "corpus.vectors.jsonl")
    query_vectors = property(lambda s: s.out / "queries.vectors.jsonl")
    corpus_text = property(lambda s: s.out / "corpus.text.jsonl")
    corpus_quantized = property(lambda s: s.out / "corpus.quantized.jsonl")
    query_quantized = property(lambda s: s.out / "queries.quantized.jsonl")
    segment = property(lambda s: s.out / "segment")
    lexical_segment = property(lambda s: s.out / "segment-lexical")
    run = property(lambda s: s.out / "run.trec")
    manifest = property(lambda s: s.out / "manifest.json")

    def index_input(self) -> tuple[Path, Path]:
        if self.cfg.do_quantization:
            return self.corpus_quantized, self.query_quantized
        return self.corpus_vectors, self.query_vectors


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_tree(path: Path) -> dict[str, str]:
    if path.is_dir():
        return {str(p.relative_to(path.parent)): sha256_file(p) for p in sorted(path.rglob("*")) if p.is_file()}
    return {path.name: sha256_file(path)} if path.exists() else {}


# --- manifest --------------------------------------------------------------

def _load_manifest(layout: Layout) -> dict:
    if layout.manifest.exists():
        with open(layout.manifest, encoding="utf-8") as f:
            return json.load(f)
    return {"config": layout.cfg.to_dict(), "steps": {}, "inputs": {}, "outputs": {}, "complete": False}


def _save_manifest(layout: Layout, manifest: dict) -> None:
    manifest["complete"] = all(manifest["steps"].get(s, {}).get("status") == "ok" for s in STEPS)
    with open(layout.manifest, "w", encoding="utf-8", newline="\n") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _record(layout: Layout, step: str, status: str, outputs: Iterable[Path] = (),
            inputs: Iterable[Path] = (), error: str | None = None, extra: dict | None = None) -> None:
    manifest = _load_manifest(layout)
    manifest["config"] = layout.cfg.to_dict()
    entry = {"status": status}
    if error:
        entry["error"] = error
    if extra:
        entry.update(extra)
    manifest["steps"][step] = entry
    for p in inputs:
        manifest["inputs"].update(_hash_tree(Path(p)))
    outs = {}
    for p in outputs:
        outs.update(_hash_tree(Path(p)))
    manifest["outputs"][step] = outs
    if status != "ok":
        # later steps were built from stale inputs
        for later in STEPS[STEPS.index(step) + 1:] if step in STEPS else ():
            manifest["steps"].pop(later, None)
    _save_manifest(layout, manifest)


def _run_step(layout: Layout, step: str, fn, inputs: Iterable[Path] = ()):
    layout.out.mkdir(parents=True, exist_ok=True)
    try:
        outputs, extra = fn(layout)
    except Exception as e:
        _record(layout, step, "incomplete", error=f"{type(e).__name__}: {e}")
        raise StepError(step, e) from e
    _record(layout, step, "ok", outputs, [p for p in inputs if Path(p).exists()], extra=extra)
    return extra


# --- encode ----------------------------------------------------------------

def _load_expansions(cfg: PipelineConfig) -> dict:
    if cfg.expansion_file is None:
        return {}
    recs = {}
    for r in dataio.read_expansions(cfg.expansion_file):
        if r.kind != cfg.expansion_kind:
            raise ConfigError(f"expansion file has {r.kind!r} records but --expansion-kind is {cfg.expansion_kind!r}")
        recs[r.doc_id] = r
    return recs


def _expanded_docs(cfg: PipelineConfig, layout: Layout) -> Iterator[dataio.Document]:
    expansions = _load_expansions(cfg)
    analyzer = Analyzer(cfg.analyzer)
    for doc in dataio.read_corpus(layout.beir.corpus):
        text = expand_text(doc.text, expansions.get(doc.doc_id), cfg.expansion_q, cfg.expansion_topk, analyzer)
        yield dataio.Document(doc.doc_id, doc.title, text)


def _encode_text_shard(args) -> list[str]:
    encoder, analyzer_mode, docs = args
    analyzer = Analyzer(analyzer_mode)
    build = binary_query_weights if encoder == "binary" else tf_term_weights
    return [dataio.format_vector(build(analyzer(f"{d.title} {d.text}")), d.doc_id) for d in docs]


def _shards(items: Iterable, size: int) -> Iterator[list]:
    it = iter(items)
    while chunk := list(islice(it, size)):
        yield chunk


def _write_lines(path: Path, lines: Iterable[str]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for line in lines:
            f.write(line + "\n")
            n += 1
    return n


def _evaluated_queries(layout: Layout) -> list[dataio.Query]:
    queries = list(dataio.read_queries(layout.beir.queries))
    if layout.beir.qrels.exists():
        judged = dataio.read_qrels(layout.beir.qrels)
        queries = [q for q in queries if q.query_id in judged]
    return queries


def _binary_queries(queries, analyzer: Analyzer, vocab: Vocabulary | None = None) -> Iterator[str]:
    for q in queries:
        toks = analyzer(q.text)
        if vocab is not None:
            toks = [t for t in toks if t in vocab]
        yield dataio.format_vector(binary_query_weights(toks), q.query_id)


def _matrix_lines(path: Path, key: str) -> Iterator[tuple[str, list]]:
    for line_no, obj in dataio.iter_jsonl(path):
        if "id" not in obj or key not in obj:
            raise ParseError(path, line_no, f"expected fields 'id' and {key!r}")
        yield obj["id"], obj[key]


def _encode_doc_lines(cfg: PipelineConfig, layout: Layout) -> Iterator[str]:
    enc = cfg.encoder_name
    if enc in ("binary", "tf"):
        shards = ((enc, cfg.analyzer, s) for s in _shards(_expanded_docs(cfg, layout), SHARD_SIZE))
        if cfg.threads > 1:
            # map() keeps shard order, so output bytes do not depend on the pool size
            with ProcessPoolExecutor(cfg.threads) as pool:
                for lines in pool.map(_encode_text_shard, shards):
                    yield from lines
        else:
            for s in shards:
                yield from _encode_text_shard(s)
    elif enc == "vector-file":
        for vec in dataio.read_vectors(layout.data / "vectors" / "corpus.jsonl"):
            yield dataio.format_vector(vec)
    elif enc == "splade-file":
        vocab = Vocabulary.from_file(layout.data / "splade" / "vocab.txt")
        for doc_id, logits in _matrix_lines(layout.data / "splade" / "corpus.jsonl", "logits"):
            yield dataio.format_vector(splade_term_weights(logits, vocab), doc_id)
    elif enc == "sparta-file":
        d = layout.data / "sparta"
        vocab = Vocabulary.from_file(d / "vocab.txt")
        embeds = np.load(d / "input_embeds.npy")
        params = SpartaParams()
        if (d / "params.json").exists():
            params = SpartaParams(float(json.loads((d / "params.json").read_text())["bias"]))
        for doc_id, passage in _matrix_lines(d / "passages.jsonl", "embeds"):
            yield dataio.format_vector(sparta_term_weights(embeds, passage, params, vocab), doc_id)


def _encode_query_lines(cfg: PipelineConfig, layout: Layout) -> Iterator[str]:
    analyzer = Analyzer(cfg.analyzer)
    queries = _evaluated_queries(layout)
    keep = {q.query_id for q in queries}
    enc = cfg.encoder_name
    if enc == "vector-file" and (layout.data / "vectors" / "queries.jsonl").exists():
        vecs = {v.source_id: v for v in dataio.read_vectors(layout.data / "vectors" / "queries.jsonl")}
        for q in queries:
            yield dataio.format_vector(vecs.get(q.query_id, TermWeightVector()), q.query_id)
    elif enc == "splade-file" and (layout.data / "splade" / "queries.jsonl").exists():
        vocab = Vocabulary.from_file(layout.data / "splade" / "vocab.txt")
        vecs = {qid: splade_term_weights(lg, vocab) for qid, lg in
                _matrix_lines(layout.data / "splade" / "queries.jsonl", "logits") if qid in keep}
        for q in queries:
            yield dataio.format_vector(vecs.get(q.query_id, TermWeightVector()), q.query_id)
    elif enc in ("splade-file", "sparta-file"):
        vocab = Vocabulary.from_file(layout.data / enc.split("-")[0] / "vocab.txt")
        yield from _binary_queries(queries, analyzer, vocab)
    else:
        yield from _binary_queries(queries, analyzer)


def step_encode(layout: Layout):
    cfg = layout.cfg
    outputs = []
    extra = {}
    if cfg.needs_lexical_index:
        n = _write_lines(layout.corpus_text, (
            json.dumps({"_id": d.doc_id, "title": d.title, "text": d.text}, ensure_ascii=False)
            for d in _expanded_docs(cfg, layout)))
        outputs.append(layout.corpus_text)
        extra["docs"] = n
    if cfg.uses_impact_index:
        extra["docs"] = _write_lines(layout.corpus_vectors, _encode_doc_lines(cfg, layout))
        extra["queries"] = _write_lines(layout.query_vectors, _encode_query_lines(cfg, layout))
        outputs += [layout.corpus_vectors, layout.query_vectors]
    return outputs, extra


# --- quantize --------------------------------------------------------------

def _quantize_file(src: Path, dst: Path, qcfg: QuantizationConfig, counter: Counter) -> int:
    return _write_lines(dst, (dataio.format_vector(quantize_vector(v, qcfg, counter))
                              for v in dataio.read_vectors(src)))


def step_quantize(layout: Layout):
    cfg = layout.cfg
    if not cfg.uses_impact_index or not cfg.do_quantization:
        return [], {"skipped": True}
    qcfg = cfg.quantization()
    counter = Counter()
    _quantize_file(layout.corpus_vectors, layout.corpus_quantized, qcfg, counter)
    # queries share the document config so scores stay integer dot products
    _quantize_file(layout.query_vectors, layout.query_quantized, qcfg, counter)
    if counter["clamped_high"]:
        log.info("quantize: %d weights above original_score_range were clamped", counter["clamped_high"])
    return [layout.corpus_quantized, layout.query_quantized], {"clamped_high": counter["clamped_high"]}


# --- index -----------------------------------------------------------------

def _impact_index_config(cfg: PipelineConfig) -> dict:
    return {"encoder_name": cfg.encoder_name,
            "quantization": cfg.quantization().to_dict() if cfg.do_quantization else None}


def _cached_build(target: Path, key_parts: dict, build) -> bool:
    """Build the segment at ``target``, reusing ``$SPRINT_CACHE_DIR`` when set.
    Returns True on a cache hit."""
    cache_root = os.environ.get("SPRINT_CACHE_DIR")
    if target.exists():
        shutil.rmtree(target)
    if not cache_root:
        build(target)
        return False
    key = hashlib.sha256(json.dumps(key_parts, sort_keys=True).encode()).hexdigest()[:32]
    cached = Path(cache_root) / key
    if cached.is_dir():
        try:
            read_segment(cached)
            shutil.copytree(cached, target)
            return True
        except SprintError:
            log.warning("ignoring unreadable cached segment %s", cached)
            shutil.rmtree(cached, ignore_errors=True)
    build(target)
    tmp = Path(cache_root) / f".{key}.tmp"
    shutil.rmtree(tmp, ignore_errors=True)
    shutil.copytree(target, tmp)
    os.replace(tmp, cached) if not cached.exists() else shutil.rmtree(tmp)
    return False


def step_index(layout: Layout):
    cfg = layout.cfg
    outputs, extra = [], {}
    if cfg.uses_impact_index:
        src, _ = layout.index_input()
        icfg = _impact_index_config(cfg)
        hit = _cached_build(
            layout.segment,
            {"kind": "impact", "input": sha256_file(src), "config": icfg},
            lambda p: write_segment(build_impact_index(dataio.read_vectors(src), icfg), p),
        )
        outputs.append(layout.segment)
        extra["segment_bytes"] = segment_size_bytes(layout.segment)
        extra["cache_hit"] = hit
    if cfg.needs_lexical_index:
        analyzer = Analyzer(cfg.analyzer)
        hit = _cached_build(
            layout.lexical_segment,
            {"kind": "lexical", "input": sha256_file(layout.corpus_text), "config": analyzer.describe()},
            lambda p: write_segment(build_lexical_index(dataio.read_corpus(layout.corpus_text), analyzer), p),
        )
        outputs.append(layout.lexical_segment)
        extra["lexical_segment_bytes"] = segment_size_bytes(layout.lexical_segment)
        extra["lexical_cache_hit"] = hit
    return outputs, extra


# --- search ----------------------------------------------------------------

def step_search(layout: Layout):
    cfg = layout.cfg
    queries = _evaluated_queries(layout)
    runs = []
    if cfg.encoder_name == "bm25":
        index = read_segment(layout.lexical_segment)
        params = cfg.bm25_params()
        analyzer = Analyzer.from_config(index.config)
        runs = [search_bm25(q.text, index, params, cfg.k, q.query_id, analyzer) for q in queries]
    else:
        _, qpath = layout.index_input()
        qvecs = {v.source_id: v for v in dataio.read_vectors(qpath)}
        index = read_segment(layout.segment)
        if cfg.first_stage == "bm25":
            lexical = read_segment(layout.lexical_segment)
            analyzer = Analyzer.from_config(lexical.config)
            doc_vectors = index.doc_vectors()
            params = cfg.bm25_params()
            depth = cfg.rerank_depth
            for q in queries:
                first = search_bm25(q.text, lexical, params, max(cfg.k, depth), q.query_id, analyzer)
                ranked = rerank(first, doc_vectors, qvecs.get(q.query_id, TermWeightVector()), depth)
                ranked.hits = ranked.hits[:cfg.k]
                runs.append(ranked)
        else:
            for q in queries:
                runs.append(search_impact(qvecs.get(q.query_id, TermWeightVector()), index, cfg.k, q.query_id))
    dataio.write_run(layout.run, runs, RUN_TAG)
    return [layout.run], {"queries": len(runs)}


# --- evaluate --------------------------------------------------------------

def step_evaluate(layout: Layout):
    report = evaluate(dataio.run_to_rankings(dataio.read_run(layout.run)),
                      dataio.read_qrels(layout.beir.qrels), EVAL_KS)
    report.write(layout.out)
    return [layout.out / "metrics.json", layout.out / "metrics.tsv"], {"means": report.means}


STEP_FUNCS = {
    "encode": step_encode,
    "quantize": step_quantize,
    "index": step_index,
    "search": step_search,
    "evaluate": step_evaluate,
}


def _step_inputs(layout: Layout, step: str) -> list[Path]:
    cfg = layout.cfg
    if step == "encode":
        ins = [layout.beir.corpus, layout.beir.queries, layout.beir.qrels]
        if cfg.expansion_file:
            ins.append(Path(cfg.expansion_file))
        if cfg.encoder_name.endswith("-file"):
            ins.append(layout.data / {"vector-file": "vectors", "splade-file": "splade",
                                      "sparta-file": "sparta"}[cfg.encoder_name])
        return ins
    if step == "evaluate":
        return [layout.beir.qrels]
    return []


def run_step(cfg: PipelineConfig, step: str):
    layout = Layout(cfg)
    return _run_step(layout, step, STEP_FUNCS[step], _step_inputs(layout, step))


def aio_run(cfg: PipelineConfig) -> MetricReport:
    """Run all five steps in order and return the metric report."""
    layout = Layout(cfg)
    if not layout.beir.corpus.exists():
        raise ConfigError(f"no BEIR corpus at {layout.beir.corpus}")
    layout.out.mkdir(parents=True, exist_ok=True)
    if layout.manifest.exists():
        layout.manifest.unlink()
    for step in STEPS:
        run_step(cfg, step)
    with open(layout.out / "metrics.json", encoding="utf-8") as f:
        data = json.load(f)
    report = MetricReport(tuple(data["ks"]), data["per_query"], data["means"],
                          data["num_queries"], data["excluded_queries"])
    return report
