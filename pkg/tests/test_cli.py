import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from tripletreg.cli import main
from tripletreg.datasets import Dataset, save_csv

SMALL = {
    "seed": 0,
    "data": {"synthetic": {"n_classes": 4, "samples_per_class": 20, "dim": 2, "sigma": 0.1},
             "test_fraction": 0.5},
    "net": {"d_emb": 8, "channels": 8},
    "train": {"iterations": 50, "batch_size": 16, "k_per_class": 4},
    "eval": {"ks": [1, 4]},
}


def write_config(tmp_path, cfg, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = write_config(root, SMALL)
    assert main(["train", "--config", str(cfg), "--out", str(root / "a")]) == 0
    return root


def test_train_artifacts(trained):
    out = trained / "a"
    rows = (out / "train_log.csv").read_text().splitlines()
    assert len(rows) == 51
    assert (out / "checkpoint.txt").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["iterations"] == 50
    assert {"final", "collapse_events", "wall_time_s", "test"} <= set(summary)
    assert set(summary["test"]) == {"embedding", "penultimate"}


def test_train_is_reproducible(trained):
    cfg = trained / "run.json"
    assert main(["train", "--config", str(cfg), "--out", str(trained / "b")]) == 0
    assert (trained / "a" / "train_log.csv").read_bytes() == (trained / "b" / "train_log.csv").read_bytes()
    assert (trained / "a" / "checkpoint.txt").read_bytes() == (trained / "b" / "checkpoint.txt").read_bytes()


@pytest.mark.parametrize("patch,key", [
    ({"bogus": 1}, "bogus"),
    ({"train": {"iterations": 5, "learning_rate": 0.1}}, "train.learning_rate"),
    ({"data": {"synthetic": {"n_clases": 3}}}, "data.synthetic.n_clases"),
])
def test_unknown_key_exits_2(tmp_path, capsys, patch, key):
    cfg = write_config(tmp_path, {**SMALL, **patch})
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert key in capsys.readouterr().err


def test_eval_reports_both_heads(trained, capsys):
    out = trained / "a"
    capsys.readouterr()
    code = main(["eval", "--ckpt", str(out / "checkpoint.txt"), "--data", str(out / "test.csv"),
                 "--ks", "1,4,8,16"])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    for head in ("embedding", "penultimate"):
        assert {"recall@1", "recall@4", "recall@8", "recall@16", "nmi"} <= set(report[head])


def test_eval_perfect_separation(tmp_path, trained, capsys):
    # two far-apart tight clusters are separated by any reasonable trained net
    rng = np.random.default_rng(0)
    X = np.concatenate([rng.normal(-5, 1e-3, (10, 2)), rng.normal(5, 1e-3, (10, 2))])
    save_csv(tmp_path / "sep.csv", Dataset(X, [0] * 10 + [1] * 10))
    capsys.readouterr()
    assert main(["eval", "--ckpt", str(trained / "a" / "checkpoint.txt"), "--data", str(tmp_path / "sep.csv"),
                 "--ks", "1"]) == 0
    rep = json.loads(capsys.readouterr().out)["embedding"]
    assert rep["recall@1"] == 1.0 and rep["nmi"] == pytest.approx(1.0)


def test_eval_mismatch_exits_1(tmp_path, trained):
    save_csv(tmp_path / "wide.csv", Dataset(np.zeros((4, 5)), [0, 1, 0, 1]))
    assert main(["eval", "--ckpt", str(trained / "a" / "checkpoint.txt"), "--data", str(tmp_path / "wide.csv")]) == 1
    (tmp_path / "bad.txt").write_text("not a checkpoint\n")
    assert main(["eval", "--ckpt", str(tmp_path / "bad.txt"), "--data", str(tmp_path / "wide.csv")]) == 1


def test_gradcheck_passes_and_lists_components(capsys):
    assert main(["gradcheck", "--points", "5"]) == 0
    lines = capsys.readouterr().out.splitlines()
    names = [ln.split()[0] for ln in lines[1:]]
    for comp in ("softmax", "triplet-hard", "triplet-soft", "center", "tcl", "magnet"):
        assert names.count(comp) == 1


def test_gradcheck_detects_perturbation():
    assert main(["gradcheck", "--points", "5", "--perturb", "1e-2"]) != 0


def _bench(capsys, *args):
    capsys.readouterr()
    code = main(["minebench", *args])
    return code, list(csv.DictReader(io.StringIO(capsys.readouterr().out)))


def test_minebench_equivalence(capsys):
    code, rows = _bench(capsys, "--batch", "32", "--trials", "100")
    assert code == 0
    assert list(rows[0]) == ["trial", "strategy", "micros", "n_triplets", "oracle_ok"]
    assert len(rows) == 200 and all(r["oracle_ok"] == "1" for r in rows)


def test_minebench_tiny_batch(capsys):
    code, rows = _bench(capsys, "--batch", "3", "--trials", "10")
    assert code == 0 and all(r["oracle_ok"] == "1" for r in rows)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "tripletreg", "minebench", "--batch", "8", "--trials", "2"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.startswith("trial,strategy,micros,n_triplets,oracle_ok")
