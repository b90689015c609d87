import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def write_beir(root: Path, docs, queries, qrels, split="test"):
    """docs: [(id, title, text)], queries: [(id, text)], qrels: {qid: {did: grade}}."""
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "corpus.jsonl", "w", encoding="utf-8") as f:
        for did, title, text in docs:
            f.write(json.dumps({"_id": did, "title": title, "text": text}) + "\n")
    with open(root / "queries.jsonl", "w", encoding="utf-8") as f:
        for qid, text in queries:
            f.write(json.dumps({"_id": qid, "text": text}) + "\n")
    (root / "qrels").mkdir(exist_ok=True)
    with open(root / "qrels" / f"{split}.tsv", "w", encoding="utf-8") as f:
        f.write("query-id\tcorpus-id\tscore\n")
        for qid, judged in qrels.items():
            for did, g in judged.items():
                f.write(f"{qid}\t{did}\t{g}\n")
    return root


TOY_DOCS = [
    ("d1", "Cats", "cats purr and cats sleep"),
    ("d2", "", "dogs bark at cats"),
    ("d3", "Birds", "birds sing"),
]
TOY_QUERIES = [("q1", "cats"), ("q2", "birds sing"), ("q3", "dogs cats")]
TOY_QRELS = {"q1": {"d1": 1}, "q2": {"d3": 2}, "q3": {"d2": 1, "d1": 0}}


@pytest.fixture
def toy_beir(tmp_path):
    return write_beir(tmp_path / "toy", TOY_DOCS, TOY_QUERIES, TOY_QRELS)


@pytest.fixture
def record_acceptance():
    def _record(name: str, ok: bool, detail: str = ""):
        ACCEPTANCE_RESULTS.append((name, ok, detail))
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
