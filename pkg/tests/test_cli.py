import json
import shutil
from pathlib import Path

import jsonschema
import numpy as np
import pytest

import cvxpref
from cvxpref import admm, battery, cli, extract, features, finetune, recovery
from cvxpref.errors import SolverError
from conftest import planted_data, write_labeled

DATA = Path(__file__).parent / "data" / "example_conversations.jsonl"
FAST_PHASE1 = ["--patterns", "8", "--iters", "150", "--rho", "0.1"]


def run(*argv):
    return cli.main([str(a) for a in argv])


def digests(out: Path) -> dict:
    return json.loads((out / "manifest.json").read_text())["outputs"]


@pytest.fixture
def labeled(tmp_path):
    X, y = planted_data(seed=3, n=60, d=4)
    return write_labeled(tmp_path, X, y)


def test_extract_examples(tmp_path, capsys):
    assert run("extract", DATA, "--out-dir", tmp_path) == 0
    stats = json.loads((tmp_path / "stats.json").read_text())
    assert stats["conversations"] == 3 and stats["triplets"] == 3
    assert stats["train"] + stats["eval"] == 3 and stats["train"] == 2
    rows = extract.read_triplets(tmp_path / "train.jsonl") + extract.read_triplets(tmp_path / "eval.jsonl")
    assert sorted(t.source_id for t in rows) == ["example-chemistry", "example-conditioning", "example-music"]
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["command"] == "extract" and man["config"]["split"] == 0.9
    assert "3 triplets" in capsys.readouterr().out


def test_extract_empty_and_corrupt(tmp_path):
    (tmp_path / "empty.jsonl").write_text("")
    assert run("extract", tmp_path / "empty.jsonl", "--out-dir", tmp_path / "e") == 0
    assert json.loads((tmp_path / "e" / "stats.json").read_text())["triplets"] == 0
    lines = DATA.read_text().splitlines()
    (tmp_path / "bad.jsonl").write_text("\n".join([lines[0], "{broken", lines[1]]) + "\n")
    assert run("extract", tmp_path / "bad.jsonl", "--out-dir", tmp_path / "b") == 0
    stats = json.loads((tmp_path / "b" / "stats.json").read_text())
    assert stats["skipped_records"] == 1 and stats["triplets"] == 2


def test_build_dataset(tmp_path):
    run("extract", DATA, "--out-dir", tmp_path / "x")
    trip = tmp_path / "x" / "train.jsonl"
    k = len(extract.read_triplets(trip))
    rng = np.random.default_rng(0)
    features.write_features(rng.standard_normal((k, 5)), tmp_path / "c.json")
    features.write_features(rng.standard_normal((k, 5)), tmp_path / "r.json")
    assert run("build-dataset", trip, tmp_path / "c.json", tmp_path / "r.json", "--out-dir", tmp_path / "ds") == 0
    fm = features.load_features(tmp_path / "ds" / "features.json")
    labels = json.loads((tmp_path / "ds" / "labels.json").read_text())["labels"]
    assert fm.n == 2 * k and labels == [1, -1] * k
    features.write_features(rng.standard_normal((k + 1, 5)), tmp_path / "bad.json")
    assert run("build-dataset", trip, tmp_path / "c.json", tmp_path / "bad.json", "--out-dir", tmp_path / "ds2") == 2


def test_phase1_phase2_score(tmp_path, labeled):
    f, l = labeled
    assert run("phase1", f, l, "--out-dir", tmp_path / "p1", *FAST_PHASE1) == 0
    p1 = tmp_path / "p1"
    summary = json.loads((p1 / "summary.json").read_text())
    assert summary["P"] == 8 and isinstance(summary["cone_violations"], int)
    assert summary["train_accuracy"] > 0.8
    for name in ("standardizer.json", "patterns.json", "net.json", "trace.csv", "solution_v.json", "solution_u_ergodic.json"):
        assert (p1 / name).exists()
    net = recovery.load_network(p1 / "net.json")
    assert net.m == summary["neurons"]

    assert run("phase2", p1 / "net.json", f, l, "--out-dir", tmp_path / "p2") == 0
    s2 = json.loads((tmp_path / "p2" / "summary.json").read_text())
    assert s2["final_loss"] <= s2["initial_loss"] and s2["iterations"] == 500
    head = finetune.load_head(tmp_path / "p2" / "head.json")
    assert (head.beta_reward, head.gamma) == (1.0, 0.5)
    assert (tmp_path / "p2" / "standardizer.json").exists()

    cand = np.random.default_rng(1).standard_normal((3, 4))
    features.write_features(features.FeatureMatrix(cand, ["a", "b", "c"]), tmp_path / "cand.json")
    (tmp_path / "probs.json").write_text(json.dumps({"base_probs": [0.5, 0.3, 0.2], "step": 0}))
    assert run("score", tmp_path / "p2" / "head.json", tmp_path / "cand.json", tmp_path / "probs.json",
               "--out-dir", tmp_path / "sc", "--lambda", "2") == 0
    doc = json.loads((tmp_path / "sc" / "scores.json").read_text())
    assert doc["guided"] and abs(sum(doc["distribution"]) - 1) <= 1e-12
    assert doc["selected_id"] == ["a", "b", "c"][doc["selected"]]
    assert run("score", tmp_path / "p2" / "head.json", tmp_path / "cand.json", tmp_path / "probs.json",
               "--out-dir", tmp_path / "sc2", "--step", "3") == 0
    doc = json.loads((tmp_path / "sc2" / "scores.json").read_text())
    assert not doc["guided"]
    np.testing.assert_allclose(doc["distribution"], [0.5, 0.3, 0.2])


def test_phase2_zero_iterations_keeps_head(tmp_path, labeled):
    f, l = labeled
    run("phase1", f, l, "--out-dir", tmp_path / "p1", *FAST_PHASE1)
    assert run("phase2", tmp_path / "p1" / "net.json", f, l, "--out-dir", tmp_path / "p2", "--iters", "0") == 0
    before = recovery.load_network(tmp_path / "p1" / "net.json")
    after = finetune.load_head(tmp_path / "p2" / "head.json").net
    assert np.array_equal(before.theta2, after.theta2) and np.array_equal(before.theta1, after.theta1)


def test_zero_labels_give_empty_net(tmp_path):
    X = np.random.default_rng(0).standard_normal((20, 3))
    f = features.write_features(X, tmp_path / "x.json")
    (tmp_path / "y.json").write_text(json.dumps([1, -1] * 10))
    # a huge penalty drives every group to zero
    assert run("phase1", f, tmp_path / "y.json", "--out-dir", tmp_path / "p1", "--beta-reg", "1e6", *FAST_PHASE1) == 0
    assert json.loads((tmp_path / "p1" / "summary.json").read_text())["neurons"] == 0
    assert run("phase2", tmp_path / "p1" / "net.json", f, tmp_path / "y.json", "--out-dir", tmp_path / "p2") == 0
    assert json.loads((tmp_path / "p2" / "summary.json").read_text())["neurons"] == 0


def test_oracle_battery_and_schema(tmp_path):
    assert run("oracle", "--out-dir", tmp_path) == 0
    doc = json.loads((tmp_path / "oracle.json").read_text())
    jsonschema.validate(doc, battery.REPORT_SCHEMA)
    assert doc["passed"] and len(doc["reports"]) == 10


def test_mutated_prox_fails_battery(monkeypatch, tmp_path):
    from cvxpref import program

    real = program.group_soft_threshold
    monkeypatch.setattr(program, "group_soft_threshold", lambda z, tau, d: 0.9 * np.asarray(real(z, tau, d)))
    assert run("oracle", "--out-dir", tmp_path) == 4
    doc = json.loads((tmp_path / "oracle.json").read_text())
    jsonschema.validate(doc, battery.REPORT_SCHEMA)
    assert not doc["passed"]
    assert not next(r for r in doc["reports"] if r["oracle"] == "prox_optimality")["passed"]


def test_exit_codes(tmp_path, labeled, monkeypatch):
    f, l = labeled
    assert run("phase1", tmp_path / "missing.json", l, "--out-dir", tmp_path / "o") == 2
    (tmp_path / "short.json").write_text("[1, -1]")
    assert run("phase1", f, tmp_path / "short.json", "--out-dir", tmp_path / "o") == 2
    (tmp_path / "zero.json").write_text(json.dumps([0] * 60))
    assert run("phase1", f, tmp_path / "zero.json", "--out-dir", tmp_path / "o") == 2

    def boom(*a, **k):
        raise SolverError("forced")

    monkeypatch.setattr(admm, "solve", boom)
    assert run("phase1", f, l, "--out-dir", tmp_path / "o") == 3


def test_config_precedence(tmp_path, labeled):
    f, l = labeled
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"phase1": {"patterns": 6, "iters": 40, "rho": 0.5}}))
    assert run("phase1", f, l, "--out-dir", tmp_path / "o", "--config", cfg, "--rho", "0.2") == 0
    used = json.loads((tmp_path / "o" / "manifest.json").read_text())["config"]
    assert (used["patterns"], used["iters"], used["rho"], used["beta_reg"]) == (6, 40, 0.2, 0.01)
    cfg.write_text(json.dumps({"phase1": {"no_such_key": 1}}))
    assert run("phase1", f, l, "--out-dir", tmp_path / "o2", "--config", cfg) == 2


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    assert out.startswith(f"cvxpref {cvxpref.__version__} (") and len(cli.source_hash()) == 64


def test_repeat_runs_are_byte_identical(tmp_path, labeled):
    f, l = labeled
    for tag in ("a", "b"):
        assert run("phase1", f, l, "--out-dir", tmp_path / tag / "p1", *FAST_PHASE1) == 0
        assert run("phase2", tmp_path / tag / "p1" / "net.json", f, l, "--out-dir", tmp_path / tag / "p2") == 0
    for stage in ("p1", "p2"):
        da, db = digests(tmp_path / "a" / stage), digests(tmp_path / "b" / stage)
        strip = lambda d, tag: {k.replace(str(tmp_path / tag), ""): v for k, v in d.items()}
        assert strip(da, "a") == strip(db, "b")


def test_seed_streams_differ():
    assert cli.derive_seed(0, "patterns") != cli.derive_seed(0, "split")
    assert cli.derive_seed(0, "patterns") == cli.derive_seed(0, "patterns")
    assert cli.derive_seed(0, "patterns") != cli.derive_seed(1, "patterns")
