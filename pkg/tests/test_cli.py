import io
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from helpers import PITTSBURGH_SENTENCE, memorization_corpus, random_embeddings

from jointnlu.cli import main
from jointnlu.corpus import read_corpus, write_native

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    corpus = memorization_corpus()
    with open(d / "train.txt", "w", encoding="utf-8") as fh:
        write_native(corpus, fh)
    emb = random_embeddings(corpus, 20)
    lines = [" ".join([t] + [repr(float(x)) for x in emb.matrix[i]]) for t, i in emb.index.items()]
    (d / "vectors.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return d


@pytest.fixture(scope="module")
def trained(files):
    out = files / "model.bin"
    rc = main(["train", "--train", str(files / "train.txt"), "--val", str(files / "train.txt"),
               "--embeddings", str(files / "vectors.txt"), "--out", str(out), "--variant", "time_distributed",
               "--batch-size", "4", "--max-epochs", "150", "--patience", "150", "--lr", "0.003"])
    assert rc == 0
    return out


def run(argv, stdin=""):
    """Run the CLI in-process with captured stdin/stdout/stderr."""
    old = sys.stdin, sys.stdout, sys.stderr
    sys.stdin, sys.stdout, sys.stderr = io.StringIO(stdin), io.StringIO(), io.StringIO()
    try:
        rc = main(argv)
        return rc, sys.stdout.getvalue(), sys.stderr.getvalue()
    finally:
        sys.stdin, sys.stdout, sys.stderr = old


def test_prepare_ctf_roundtrip(tmp_path):
    out = tmp_path / "out.txt"
    rc, stdout, _ = run(["prepare", "--input", str(DATA / "sample.ctf"), "--output", str(out)])
    assert rc == 0 and "3 utterances" in stdout
    assert read_corpus(out).utterances == read_corpus(DATA / "sample.native").utterances
    assert read_corpus(out).utterances == read_corpus(DATA / "sample.ctf").utterances


def test_prepare_empty_input(tmp_path):
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    rc, _, err = run(["prepare", "--input", str(empty), "--output", str(tmp_path / "o.txt")])
    assert rc != 0 and "error" in err


def test_train_writes_history_and_summary(files, trained):
    rows = [json.loads(x) for x in Path(f"{trained}.history.jsonl").read_text().splitlines()]
    assert len(rows) == 150
    assert rows[0]["slot_loss_weight"] == 1.0


def test_eval_after_train(files, trained):
    report = files / "report.json"
    rc, stdout, _ = run(["eval", "--model", str(trained), "--test", str(files / "train.txt"),
                         "--embeddings", str(files / "vectors.txt"), "--report", str(report)])
    assert rc == 0
    d = json.loads(report.read_text())
    assert d["slot"]["f1"] == 1.0 and d["intent_accuracy"] == 1.0
    assert "slot F1         1.0000" in stdout


def test_predict_from_stdin(files, trained):
    rc, stdout, _ = run(["predict", "--model", str(trained), "--embeddings", str(files / "vectors.txt")],
                        stdin=PITTSBURGH_SENTENCE + "\n\n   \nground transportation in dallas\n")
    assert rc == 0
    lines = [json.loads(x) for x in stdout.splitlines()]
    assert len(lines) == 2
    assert lines[0]["intent"] == "flight_info"
    assert {(e["type"], e["text"]) for e in lines[0]["entities"]} == {
        ("from_city", "pittsburgh"), ("to_city", "baltimore"),
        ("depart_date", "thursday"), ("depart_time", "morning"),
    }
    assert lines[1]["intent"] == "ground_service"


def test_inspect(trained):
    rc, stdout, _ = run(["inspect", "--model", str(trained)])
    d = json.loads(stdout)
    assert rc == 0
    assert d["parameters"] == d["parameters_closed_form"] == sum(d["parameters_by_array"].values())
    assert d["config"]["variant"] == "time_distributed"


def test_inspect_corrupted_checkpoint(trained, tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(trained.read_bytes()[:-10])
    rc, _, err = run(["inspect", "--model", str(bad)])
    assert rc != 0 and "bytes" in err


def test_train_bad_embeddings_path(files, tmp_path):
    rc, _, err = run(["train", "--train", str(files / "train.txt"), "--embeddings", str(tmp_path / "nope.txt"),
                      "--out", str(tmp_path / "m.bin")])
    assert rc != 0 and "nope.txt" in err


def test_train_requires_out(files):
    rc, _, err = run(["train", "--train", str(files / "train.txt"), "--embeddings", str(files / "vectors.txt")])
    assert rc == 2 and "--out" in err


def test_train_intent_task(files, tmp_path):
    out = tmp_path / "m.bin"
    rc, stdout, _ = run(["train", "--train", str(files / "train.txt"), "--embeddings", str(files / "vectors.txt"),
                         "--out", str(out), "--task", "intent", "--max-epochs", "2", "--hidden", "8",
                         "--val-fraction", "0.2"])
    assert rc == 0
    assert json.loads(stdout)["slot_loss_weight"] == 0.0
    rows = [json.loads(x) for x in Path(f"{out}.history.jsonl").read_text().splitlines()]
    assert all(r["slot_loss_weight"] == 0.0 for r in rows)


def test_bench(files):
    rc, stdout, _ = run(["bench", "--train", str(files / "train.txt"), "--embeddings", str(files / "vectors.txt"),
                         "--epochs", "2", "--hidden", "8", "--variant", "time_distributed"])
    assert rc == 0
    lines = stdout.splitlines()
    assert len(lines) == 4
    rows = [line.split() for line in lines[1:3]]
    assert [r[0] for r in rows] == ["0", "1"]
    mean = float(lines[-1].split()[-1])
    assert mean == pytest.approx(np.mean([float(r[1]) for r in rows]), abs=2e-3)


def test_bench_zero_epochs(files):
    rc, _, err = run(["bench", "--train", str(files / "train.txt"), "--embeddings", str(files / "vectors.txt"),
                      "--epochs", "0"])
    assert rc == 2 and "epochs" in err


def test_config_file_merging(files, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"hidden": 7, "max_epochs": 1, "variant": "time_distributed",
                               "embeddings": str(files / "vectors.txt")}))
    out = tmp_path / "m.bin"
    rc, stdout, _ = run(["train", "--config", str(cfg), "--train", str(files / "train.txt"), "--out", str(out),
                         "--hidden", "5"])
    assert rc == 0
    assert json.loads(stdout)["epochs"] == 1
    rc, stdout, _ = run(["inspect", "--model", str(out)])
    c = json.loads(stdout)["config"]
    assert c["hidden"] == 5 and c["variant"] == "time_distributed"


def test_config_unknown_key(files, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"hiden": 7}))
    rc, _, err = run(["train", "--config", str(cfg)])
    assert rc == 2 and "hiden" in err


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "jointnlu", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("prepare", "train", "eval", "predict", "inspect", "bench"):
        assert cmd in r.stdout
