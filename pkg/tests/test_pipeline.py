import json
import math

import numpy as np
import pytest

from conftest import write_beir
from sprint_ir.cli import main
from sprint_ir.errors import ConfigError
from sprint_ir.metrics import evaluate_run
from sprint_ir.pipeline import STEPS, PipelineConfig, StepError, aio_run, run_step

TOY_RUN = (
    "q1 Q0 d1 1 3.000000 sprint\n"
    "q1 Q0 d2 2 1.000000 sprint\n"
    "q2 Q0 d3 1 3.000000 sprint\n"
    "q3 Q0 d1 1 3.000000 sprint\n"
    "q3 Q0 d2 2 2.000000 sprint\n"
)


def cfg(data, out, **kw):
    kw.setdefault("encoder_name", "tf")
    return PipelineConfig(data_dir=str(data), output_dir=str(out), **kw)


def test_toy_aio_matches_hand_ranking(toy_beir, tmp_path):
    report = aio_run(cfg(toy_beir, tmp_path / "out", do_quantization=False))
    assert (tmp_path / "out" / "run.trec").read_text() == TOY_RUN
    assert report.means["ndcg@10"] == pytest.approx((2 + 1 / math.log2(3)) / 3)
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["complete"] is True
    assert set(manifest["steps"]) == set(STEPS)
    assert manifest["config"]["do_quantization"] is False
    assert "run.trec" in manifest["outputs"]["search"]


def test_aio_twice_identical(toy_beir, tmp_path):
    c = cfg(toy_beir, tmp_path / "out")
    aio_run(c)
    first = (tmp_path / "out" / "run.trec").read_bytes()
    aio_run(c)
    assert (tmp_path / "out" / "run.trec").read_bytes() == first


def test_listing_config_echoed(toy_beir, tmp_path):
    c = cfg(toy_beir, tmp_path / "out", do_quantization=True, quantization_method="range-nbits",
            original_score_range=5, quantization_nbits=8, topic_split="test")
    aio_run(c)
    echoed = json.loads((tmp_path / "out" / "manifest.json").read_text())["config"]
    assert echoed == c.to_dict()
    assert PipelineConfig.from_dict(echoed) == c
    # quantized binary queries against quantized tf docs: 51 per unit of weight 1.0
    run = (tmp_path / "out" / "run.trec").read_text().splitlines()
    assert run[0].split()[2:5] == ["d1", "1", f"{51 * 153:.6f}"]


def test_steps_compose_to_aio(toy_beir, tmp_path):
    a = cfg(toy_beir, tmp_path / "aio")
    aio_run(a)
    s = cfg(toy_beir, tmp_path / "steps")
    for step in STEPS:
        run_step(s, step)
    for name in ("run.trec", "corpus.quantized.jsonl", "segment/postings.bin", "segment/meta.json",
                 "segment/docs.tsv", "metrics.json"):
        assert (tmp_path / "aio" / name).read_bytes() == (tmp_path / "steps" / name).read_bytes()


def test_bm25_pipeline_and_rerank(toy_beir, tmp_path):
    rep = aio_run(cfg(toy_beir, tmp_path / "bm25", encoder_name="bm25"))
    assert 0 < rep.means["ndcg@10"] <= 1
    assert (tmp_path / "bm25" / "segment-lexical" / "postings.bin").exists()
    aio_run(cfg(toy_beir, tmp_path / "rr", first_stage="bm25", rerank_depth=1, do_quantization=False))
    lines = (tmp_path / "rr" / "run.trec").read_text().splitlines()
    assert sum(1 for l in lines if l.startswith("q1 ")) == 1


def test_generated_query_expansion(toy_beir, tmp_path):
    exp = tmp_path / "exp.jsonl"
    exp.write_text('{"id": "d3", "queries": ["dogs dogs dogs"]}\n')
    aio_run(cfg(toy_beir, tmp_path / "out", do_quantization=False,
                expansion_kind="generated-queries", expansion_file=str(exp)))
    run = (tmp_path / "out" / "run.trec").read_text()
    assert "q3 Q0 d1 1 3.000000 sprint\nq3 Q0 d3 2 3.000000 sprint\n" in run


def test_vector_file_encoder_copies_through(tmp_path):
    data = write_beir(tmp_path / "ds", [("a", "", "x"), ("b", "", "y")], [("q", "x")], {"q": {"a": 1}})
    (data / "vectors").mkdir()
    vecs = '{"id": "a", "vector": {"x": 1.5, "z": 0.25}}\n{"id": "b", "vector": {"y": 2.0}}\n'
    (data / "vectors" / "corpus.jsonl").write_text(vecs)
    (data / "vectors" / "queries.jsonl").write_text('{"id": "q", "vector": {"x": 1.0}}\n')
    run_step(cfg(data, tmp_path / "out", encoder_name="vector-file"), "encode")
    assert (tmp_path / "out" / "corpus.vectors.jsonl").read_text() == vecs


def test_splade_and_sparta_file_encoders(tmp_path):
    data = write_beir(tmp_path / "ds", [("a", "", "cat"), ("b", "", "dog")], [("q", "cat")], {"q": {"a": 1}})
    (data / "splade").mkdir()
    (data / "splade" / "vocab.txt").write_text("cat\ndog\n")
    (data / "splade" / "corpus.jsonl").write_text(
        '{"id": "a", "logits": [[3.0, 1.0], [-1.0, -2.0]]}\n{"id": "b", "logits": [[-1.0], [2.0]]}\n')
    rep = aio_run(cfg(data, tmp_path / "splade", encoder_name="splade-file"))
    assert rep.means["ndcg@10"] == 1.0
    row = json.loads((tmp_path / "splade" / "corpus.vectors.jsonl").read_text().splitlines()[0])
    assert row == {"id": "a", "vector": {"cat": math.log(4)}}

    (data / "sparta").mkdir()
    (data / "sparta" / "vocab.txt").write_text("cat\ndog\n")
    np.save(data / "sparta" / "input_embeds.npy", np.array([[1.0, 0.0], [0.0, 1.0]]))
    (data / "sparta" / "passages.jsonl").write_text(
        '{"id": "a", "embeds": [[2.0, 0.0]]}\n{"id": "b", "embeds": [[0.0, 3.0]]}\n')
    rep = aio_run(cfg(data, tmp_path / "sparta", encoder_name="sparta-file"))
    assert rep.means["ndcg@10"] == 1.0


def test_cache_reuse(toy_beir, tmp_path, monkeypatch):
    monkeypatch.setenv("SPRINT_CACHE_DIR", str(tmp_path / "cache"))
    aio_run(cfg(toy_beir, tmp_path / "a"))
    aio_run(cfg(toy_beir, tmp_path / "b"))
    steps = json.loads((tmp_path / "b" / "manifest.json").read_text())["steps"]
    assert steps["index"]["cache_hit"] is True
    assert (tmp_path / "a" / "segment" / "postings.bin").read_bytes() == \
        (tmp_path / "b" / "segment" / "postings.bin").read_bytes()


def test_failure_marks_manifest_incomplete(toy_beir, tmp_path):
    (toy_beir / "corpus.jsonl").write_text('{"_id": "d1", "text": "ok"}\n{"_id": "d2"}\n')
    with pytest.raises(StepError) as e:
        aio_run(cfg(toy_beir, tmp_path / "out"))
    assert e.value.step == "encode" and ":2:" in str(e.value)
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["complete"] is False
    assert manifest["steps"]["encode"]["status"] == "incomplete"


def test_config_validation():
    with pytest.raises(ConfigError):
        PipelineConfig("unicoil", "d", "o")
    with pytest.raises(ConfigError):
        PipelineConfig("tf", "d", "o", rerank_depth=10)
    with pytest.raises(ConfigError):
        PipelineConfig("tf", "d", "o", quantization_nbits=1)
    with pytest.raises(ConfigError):
        PipelineConfig("tf", "d", "o", expansion_kind="generated-queries")


# --- CLI -------------------------------------------------------------------

def cli_args(data, out, *extra):
    return ["--encoder-name", "tf", "--data-dir", str(data), "--output-dir", str(out), *extra]


def test_cli_aio_and_exit_codes(toy_beir, tmp_path, capsys):
    assert main(["aio", *cli_args(toy_beir, tmp_path / "out", "--do-quantization", "false")]) == 0
    assert (tmp_path / "out" / "run.trec").read_text() == TOY_RUN
    assert "ndcg@10" in capsys.readouterr().out
    assert main(["aio", "--encoder-name", "nope"]) == 2
    assert main(["aio", *cli_args(toy_beir, tmp_path / "o2", "--rerank-depth", "5")]) == 2
    assert main(["aio", *cli_args(tmp_path / "missing", tmp_path / "o3")]) == 2
    (toy_beir / "qrels" / "test.tsv").write_text("h\nq1\td1\tbad\n")
    assert main(["aio", *cli_args(toy_beir, tmp_path / "o4")]) == 3


def test_cli_steps_match_aio(toy_beir, tmp_path):
    assert main(["aio", *cli_args(toy_beir, tmp_path / "aio")]) == 0
    for step in STEPS:
        assert main([step, *cli_args(toy_beir, tmp_path / "steps")]) == 0
    for name in ("run.trec", "segment/postings.bin", "metrics.tsv"):
        assert (tmp_path / "aio" / name).read_bytes() == (tmp_path / "steps" / name).read_bytes()


def test_cli_evaluate_run_file(toy_beir, tmp_path, capsys):
    run = tmp_path / "r.trec"
    run.write_text(TOY_RUN)
    qrels = toy_beir / "qrels" / "test.tsv"
    assert main(["evaluate", "--run", str(run), "--qrels", str(qrels), "--ks", "10"]) == 0
    out = dict(l.split("\t") for l in capsys.readouterr().out.splitlines()[1:])
    lib = evaluate_run(run, qrels, (10,))
    assert float(out["ndcg@10"]) == pytest.approx(lib.means["ndcg@10"], abs=1e-6)
    assert main(["evaluate", "--run", str(run)]) == 2


def test_cli_analyze(toy_beir, tmp_path, capsys):
    assert main(["aio", *cli_args(toy_beir, tmp_path / "out")]) == 0
    capsys.readouterr()
    assert main(["analyze", "sparsity", str(tmp_path / "out" / "corpus.vectors.jsonl")]) == 0
    assert "avg_nonzero=2.7" in capsys.readouterr().out
    lat = tmp_path / "lat.tsv"
    assert main(["analyze", "latency", "--segment", str(tmp_path / "out" / "segment"),
                 "--queries", str(toy_beir / "queries.jsonl"), "--out", str(lat)]) == 0
    assert lat.read_text().startswith("bin_lo\tbin_hi\tmean_ms\tstd_ms\tn\n")
    recs = tmp_path / "p.tsv"
    recs.write_text("system\tlatency_ms\tndcg10\tindex_mb\nA\t100\t0.6\t1\nC\t600\t0.6\t2\n")
    assert main(["analyze", "pareto", str(recs)]) == 0
    assert capsys.readouterr().out.splitlines()[2].endswith("\t0")
