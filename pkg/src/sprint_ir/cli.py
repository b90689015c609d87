"""Command line entry point: ``sprint-ir aio`` plus one subcommand per step.

Exit codes: 0 success, 2 config error, 3 data error, 4 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import dataio
from .analysis import (
    format_pareto_tsv,
    latency_benchmark,
    pareto_table,
    read_pareto_records,
    sparsity_stats,
)
from .errors import ConfigError, IndexBuildError, InvalidInputError, ParseError, SegmentLoadError
from .index import read_segment
from .metrics import evaluate_run
from .pipeline import ENCODERS, STEPS, PipelineConfig, StepError, aio_run, run_step
from .search import Bm25Engine, ImpactEngine

log = logging.getLogger("sprint_ir")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4
DATA_ERRORS = (ParseError, SegmentLoadError, IndexBuildError, InvalidInputError, FileNotFoundError,
               UnicodeDecodeError)


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "y", "on"):
        return True
    if v in ("0", "false", "no", "n", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {s!r}")


def _add_pipeline_args(p: argparse.ArgumentParser, required: bool = True):
    p.add_argument("--encoder-name", required=required, choices=ENCODERS)
    p.add_argument("--data-dir", required=required, help="BEIR dataset directory")
    p.add_argument("--output-dir", required=required)
    p.add_argument("--split", dest="topic_split", default="test")
    p.add_argument("--k", type=int, default=1000)
    p.add_argument("--do-quantization", type=_bool, default=True, metavar="BOOL")
    p.add_argument("--quantization-method", default="range-nbits", choices=("range-nbits", "scale-100"))
    p.add_argument("--original-score-range", type=float, default=5.0)
    p.add_argument("--quantization-nbits", type=int, default=8)
    p.add_argument("--expansion-kind", choices=("generated-queries", "weighted-tokens"))
    p.add_argument("--expansion-file")
    p.add_argument("--expansion-q", type=int, default=20)
    p.add_argument("--expansion-topk", type=int, default=200)
    p.add_argument("--rerank-depth", type=int)
    p.add_argument("--first-stage", choices=("bm25",))
    p.add_argument("--bm25-k1", type=float, default=0.9)
    p.add_argument("--bm25-b", type=float, default=0.4)
    p.add_argument("--analyzer", default="english-porter", choices=("english-porter", "whitespace-lower"))
    p.add_argument("--threads", type=int, default=1, help="encode workers (other steps are single-threaded)")


def _config(args) -> PipelineConfig:
    keys = ("encoder_name", "data_dir", "output_dir", "topic_split", "k", "do_quantization",
            "quantization_method", "original_score_range", "quantization_nbits", "expansion_kind",
            "expansion_file", "expansion_q", "expansion_topk", "rerank_depth", "first_stage",
            "bm25_k1", "bm25_b", "analyzer", "threads")
    return PipelineConfig(**{k: getattr(args, k) for k in keys})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sprint-ir", description="Learned sparse retrieval pipeline")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_pipeline_args(sub.add_parser("aio", help="encode, quantize, index, search and evaluate"))
    for step in STEPS:
        sp = sub.add_parser(step, help=f"run only the {step} step")
        if step == "evaluate":
            sp.add_argument("--run", help="score this run file instead of the pipeline's run.trec")
            sp.add_argument("--qrels", help="qrels TSV (with --run)")
            sp.add_argument("--ks", default="10,100")
        _add_pipeline_args(sp, required=step != "evaluate")

    an = sub.add_parser("analyze", help="sparsity, latency and Pareto reports")
    asub = an.add_subparsers(dest="analysis", required=True)
    sp = asub.add_parser("sparsity")
    sp.add_argument("vectors", nargs="+", help="vector JSONL files")
    lat = asub.add_parser("latency")
    lat.add_argument("--segment", required=True)
    lat.add_argument("--queries", required=True, help="BEIR queries.jsonl")
    lat.add_argument("--query-vectors", help="query vector JSONL (impact segments); default binary")
    lat.add_argument("--repetitions", type=int, default=3)
    lat.add_argument("--k", type=int, default=1000)
    lat.add_argument("--out")
    par = asub.add_parser("pareto")
    par.add_argument("records", help="TSV with columns system latency_ms ndcg10 index_mb")
    par.add_argument("--out")
    return parser


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _analyze(args) -> None:
    if args.analysis == "sparsity":
        for path in args.vectors:
            stats = sparsity_stats(dataio.read_vectors(path))
            print(f"{path}\tcount={stats.count}\tavg_nonzero={stats.mean:.1f}")
    elif args.analysis == "latency":
        from .analyzer import Analyzer
        from .representation import binary_query_weights

        index = read_segment(args.segment)
        queries = list(dataio.read_queries(args.queries))
        if index.kind == "lexical":
            engine = Bm25Engine(index, k=args.k)
        elif args.query_vectors:
            qv = {v.source_id: v for v in dataio.read_vectors(args.query_vectors)}
            queries = [q for q in queries if q.query_id in qv]
            by_text = {q.text: qv[q.query_id] for q in queries}
            engine = ImpactEngine(index, by_text.__getitem__, k=args.k)
        else:
            analyzer = Analyzer.from_config(index.config) if "analyzer" in index.config else Analyzer()
            engine = ImpactEngine(index, lambda t: binary_query_weights(analyzer(t)), k=args.k)
        report = latency_benchmark(queries, engine, args.repetitions)
        _emit(report.to_tsv(), args.out)
        corr = "undefined" if report.correlation is None else f"{report.correlation:.4f}"
        print(f"correlation\t{corr}\tsingle_threaded\t{report.single_threaded}", file=sys.stderr)
    else:
        _emit(format_pareto_tsv(pareto_table(read_pareto_records(args.records))), args.out)


def _evaluate(args) -> None:
    ks = tuple(int(k) for k in args.ks.split(","))
    if args.run:
        if not args.qrels:
            raise ConfigError("--run requires --qrels")
        report = evaluate_run(args.run, args.qrels, ks)
        sys.stdout.write(report.to_tsv())
        return
    if not (args.encoder_name and args.data_dir and args.output_dir):
        raise ConfigError("evaluate needs --run/--qrels or the pipeline flags")
    run_step(_config(args), "evaluate")
    sys.stdout.write((Path(args.output_dir) / "metrics.tsv").read_text())


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "aio":
            report = aio_run(_config(args))
            sys.stdout.write(json.dumps(report.means, indent=2, sort_keys=True) + "\n")
        elif args.command == "analyze":
            _analyze(args)
        elif args.command == "evaluate":
            _evaluate(args)
        else:
            run_step(_config(args), args.command)
    except ConfigError as e:
        log.error("config error: %s", e)
        return EXIT_CONFIG
    except StepError as e:
        log.error("%s", e)
        if isinstance(e.cause, ConfigError):
            return EXIT_CONFIG
        return EXIT_DATA if isinstance(e.cause, DATA_ERRORS) else EXIT_INTERNAL
    except DATA_ERRORS as e:
        log.error("data error: %s", e)
        return EXIT_DATA
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
