"""``cvxpref`` command line: extract, build-dataset, phase1, phase2, score, oracle.

Every command writes a ``manifest.json`` into its output directory with the
effective configuration, input and output digests and the wall-clock time.
Exit codes: 0 ok, 2 bad input, 3 solver failure, 4 verification failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, admm, battery, extract, features, finetune, guided, patterns, program, recovery
from .errors import InputError, SolverError, VerificationError

log = logging.getLogger("cvxpref")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4

DEFAULTS = {
    "extract": {"split": 0.9, "seed": 0, "template": "plain"},
    "build-dataset": {},
    "phase1": {
        "patterns": 16,
        "enumerate": False,
        "seed": 0,
        "rho": 0.01,
        "gamma_alpha": None,
        "beta_reg": 0.01,
        "iters": 1000,
        "stop_tol": 1e-6,
        "pcg_tol0": 1e-3,
        "prune_tol": recovery.DEFAULT_PRUNE_TOL,
        "standardize": True,
    },
    "phase2": {"beta_reward": finetune.DEFAULT_BETA_REWARD, "gamma": finetune.DEFAULT_GAMMA, "iters": 500, "optimizer": "agd", "lr": 1e-2, "cold_start": False},
    "score": {"guidance_scale": 1.0, "every_n": 5, "step": 0, "top_p": 0.9, "top_k": 50, "num_candidates": 5},
    "oracle": {"suite": "standard", "seed": 0},
}

# seed streams, one per consumer, split from the run seed
SEED_STREAMS = {"patterns": 0, "split": 1}


def source_hash() -> str:
    """SHA-256 over the package's own source files, in name order."""
    h = hashlib.sha256()
    root = Path(__file__).resolve().parent
    for path in sorted(list(root.glob("*.py")) + list(root.glob("*.pyx"))):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()


def derive_seed(seed: int, stream: str) -> int:
    """Independent 32-bit seed for ``stream``, spawned from the run seed."""
    ss = np.random.SeedSequence(seed, spawn_key=(SEED_STREAMS[stream],))
    return int(ss.generate_state(1)[0])


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Defaults, overridden by the ``--config`` JSON, overridden by explicit flags."""
    cfg = dict(DEFAULTS[command])
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise InputError("config file must hold a JSON object")
        section = doc.get(command, doc)
        for key, val in section.items():
            key = key.replace("-", "_")
            if key not in cfg:
                raise InputError(f"unknown config key {key!r} for {command}")
            cfg[key] = val
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


class RunManifest:
    def __init__(self, command: str, config: dict):
        self.command = command
        self.config = config
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, str] = {}
        self.extra: dict = {}
        self._t0 = time.perf_counter()

    def add_inputs(self, *paths) -> None:
        for p in paths:
            self.inputs[str(p)] = features.file_digest(p)

    def add_outputs(self, *paths) -> None:
        for p in paths:
            self.outputs[str(p)] = features.file_digest(p)

    def write(self, out_dir: Path) -> Path:
        doc = {
            "command": self.command,
            "version": __version__,
            "source_sha256": source_hash(),
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "wall_clock_seconds": round(time.perf_counter() - self._t0, 6),
        }
        doc.update(self.extra)
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _write_json(path: Path, doc) -> Path:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def read_labels(path) -> np.ndarray:
    doc = _read_json(path)
    labels = doc.get("labels") if isinstance(doc, dict) else doc
    if not isinstance(labels, list):
        raise InputError(f"{path}: expected a JSON list of labels")
    y = np.asarray(labels, dtype=np.float64)
    if not np.all(np.abs(y) == 1):
        raise InputError(f"{path}: labels must be +1 or -1")
    return y


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands -----------------------------------------------------------------


def cmd_extract(args) -> int:
    cfg = resolve_config("extract", args)
    out = _out_dir(args)
    if cfg["template"] not in extract.TEMPLATES:
        raise InputError(f"unknown template {cfg['template']!r}")
    man = RunManifest("extract", cfg)
    man.add_inputs(args.input)
    stats = extract.CorpusStats()
    with open(args.input, encoding="utf-8") as fh:
        convs = extract.read_jsonl(fh, stats)
        triplets = list(extract.extract_corpus(convs, stats, extract.TEMPLATES[cfg["template"]]))
    train, held = extract.split_train_eval(triplets, cfg["split"], derive_seed(cfg["seed"], "split"))
    extract.write_jsonl(train, out / "train.jsonl")
    extract.write_jsonl(held, out / "eval.jsonl")
    doc = stats.to_dict()
    doc.update(train=len(train), eval=len(held))
    _write_json(out / "stats.json", doc)
    man.add_outputs(out / "train.jsonl", out / "eval.jsonl", out / "stats.json")
    man.write(out)
    print(f"{stats.conversations} conversations -> {stats.triplets} triplets "
          f"({len(train)} train / {len(held)} eval, {stats.skipped_records} records skipped)")
    return EXIT_OK


def cmd_build_dataset(args) -> int:
    cfg = resolve_config("build-dataset", args)
    out = _out_dir(args)
    man = RunManifest("build-dataset", cfg)
    triplets = extract.read_triplets(args.triplets)
    chosen = features.load_features(args.chosen)
    rejected = features.load_features(args.rejected)
    man.add_inputs(args.triplets, *features.manifest_files(args.chosen), *features.manifest_files(args.rejected))
    ds = features.build_classifier_dataset(triplets, chosen, rejected)
    features.write_features(ds.X, out / "features.json")
    _write_json(out / "labels.json", {"labels": [int(v) for v in ds.y], "ids": list(ds.X.ids)})
    man.add_outputs(*features.manifest_files(out / "features.json"), out / "labels.json")
    man.write(out)
    print(f"{len(triplets)} triplets -> {ds.X.n} rows x {ds.X.d} features")
    return EXIT_OK


def _maybe_standardize(X: np.ndarray, path: Path | None):
    if path is None or not Path(path).exists():
        return X
    st = features.Standardizer.from_dict(_read_json(path))
    return st.apply(X)


def cmd_phase1(args) -> int:
    cfg = resolve_config("phase1", args)
    out = _out_dir(args)
    man = RunManifest("phase1", cfg)
    fm = features.load_features(args.features)
    y = read_labels(args.labels)
    man.add_inputs(*features.manifest_files(args.features), args.labels)
    if y.shape[0] != fm.n:
        raise InputError(f"{y.shape[0]} labels for {fm.n} feature rows")
    X = fm.values
    outputs = []
    if cfg["standardize"]:
        st = features.fit_standardizer(X)
        X = st.apply(X)
        outputs.append(_write_json(out / "standardizer.json", st.to_dict()))
    if cfg["enumerate"]:
        ps = patterns.enumerate_patterns(X)
    else:
        ps = patterns.sample_patterns(X, int(cfg["patterns"]), derive_seed(cfg["seed"], "patterns"))
    prog = program.ConvexProgram(X, ps, y, cfg["beta_reg"])
    acfg = admm.AdmmConfig(
        rho=cfg["rho"],
        gamma_alpha=cfg["gamma_alpha"],
        max_iters=int(cfg["iters"]),
        stop_tol=cfg["stop_tol"],
        pcg_tol0=cfg["pcg_tol0"],
    )
    sol = admm.solve(prog, acfg)
    net = recovery.recover_network(sol.v, ps, cfg["prune_tol"])
    (out / "patterns.json").write_text(ps.to_json() + "\n", encoding="utf-8")
    outputs.append(out / "patterns.json")
    recovery.save_network(net, out / "net.json")
    outputs += recovery.network_files(out / "net.json")
    for name, vec in (("solution_v", sol.v), ("solution_u_ergodic", sol.u_ergodic)):
        features.write_features(vec.reshape(2 * prog.P, prog.d), out / f"{name}.json")
        outputs += features.manifest_files(out / f"{name}.json")
    sol.to_csv(out / "trace.csv")
    outputs.append(out / "trace.csv")
    pred = np.where(net.forward_batch(X) >= 0, 1.0, -1.0)
    accuracy = float(np.mean(pred == y))
    summary = {
        "P": prog.P,
        "neurons": net.m,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "objective": sol.objective,
        "train_accuracy": accuracy,
        "cone_violations": recovery.cone_violations(net, X, ps),
    }
    outputs.append(_write_json(out / "summary.json", summary))
    man.add_outputs(*outputs)
    man.write(out)
    print(f"phase1: P={prog.P} neurons={net.m} iters={sol.iterations} objective={sol.objective:.6g} "
          f"train_accuracy={accuracy:.4f}")
    return EXIT_OK


def _default_standardizer(net_path) -> Path | None:
    cand = Path(net_path).parent / "standardizer.json"
    return cand if cand.exists() else None


def cmd_phase2(args) -> int:
    cfg = resolve_config("phase2", args)
    out = _out_dir(args)
    man = RunManifest("phase2", cfg)
    net = recovery.load_network(args.net)
    fm = features.load_features(args.features)
    y = read_labels(args.labels)
    std_path = Path(args.standardizer) if args.standardizer else _default_standardizer(args.net)
    man.add_inputs(*recovery.network_files(args.net), *features.manifest_files(args.features), args.labels)
    if std_path is not None:
        man.add_inputs(std_path)
    if y.shape[0] != fm.n:
        raise InputError(f"{y.shape[0]} labels for {fm.n} feature rows")
    X = _maybe_standardize(fm.values, std_path)
    ds = finetune.Phase2Dataset(finetune.build_phase2_features(net, X), y)
    theta0 = None if cfg["cold_start"] else net.theta2
    iters = int(cfg["iters"])
    if net.m == 0 or ds.N == 0:
        theta, trace = (net.theta2.copy(), finetune.AgdTrace())
    elif cfg["optimizer"] == "agd":
        theta, trace = finetune.agd_minimize(ds, cfg["beta_reward"], cfg["gamma"], theta0, iters)
    elif cfg["optimizer"] == "adam":
        theta, trace = finetune.adam_minimize(ds, cfg["beta_reward"], cfg["gamma"], theta0, iters, lr=cfg["lr"])
    else:
        raise InputError(f"unknown optimizer {cfg['optimizer']!r}")
    head = finetune.CoalaHead(net.with_theta2(theta), cfg["beta_reward"], cfg["gamma"])
    finetune.save_head(head, out / "head.json")
    outputs = finetune.head_files(out / "head.json")
    if std_path is not None:
        (out / "standardizer.json").write_bytes(Path(std_path).read_bytes())
        outputs.append(out / "standardizer.json")
    trace.to_csv(out / "trace.csv")
    outputs.append(out / "trace.csv")
    summary = {
        "neurons": net.m,
        "initial_loss": trace.loss[0] if trace.loss else None,
        "final_loss": trace.loss[-1] if trace.loss else None,
        "iterations": max(len(trace.loss) - 1, 0),
    }
    outputs.append(_write_json(out / "summary.json", summary))
    man.add_outputs(*outputs)
    man.write(out)
    if trace.loss:
        print(f"phase2: loss {trace.loss[0]:.6g} -> {trace.loss[-1]:.6g} over {summary['iterations']} iterations")
    else:
        print("phase2: empty head, nothing to fit")
    return EXIT_OK


def read_base_probs(path):
    doc = _read_json(path)
    step = None
    if isinstance(doc, dict):
        step = doc.get("step")
        doc = doc.get("base_probs", doc.get("probs"))
    if not isinstance(doc, list):
        raise InputError(f"{path}: expected a list of base probabilities")
    return np.asarray(doc, dtype=np.float64), step


def cmd_score(args) -> int:
    cfg = resolve_config("score", args)
    out = _out_dir(args)
    man = RunManifest("score", cfg)
    head = finetune.load_head(args.head)
    cand = features.load_features(args.candidates)
    probs, step = read_base_probs(args.base_probs)
    if args.step is None and step is not None:
        cfg["step"] = int(step)
    std_path = Path(args.standardizer) if args.standardizer else _default_standardizer(args.head)
    man.add_inputs(*finetune.head_files(args.head), *features.manifest_files(args.candidates), args.base_probs)
    if std_path is not None:
        man.add_inputs(std_path)
    gcfg = guided.GuidanceConfig(cfg["guidance_scale"], cfg["every_n"], cfg["top_p"], cfg["top_k"], cfg["num_candidates"])
    batch = guided.CandidateBatch(probs, _maybe_standardize(cand.values, std_path), int(cfg["step"]))
    dist, selected = guided.guide(head, batch, gcfg)
    doc = {
        "step": batch.step_index,
        "guided": gcfg.applies_at(batch.step_index),
        "distribution": [float(p) for p in dist],
        "selected": selected,
    }
    if cand.ids is not None:
        doc["selected_id"] = cand.ids[selected]
    _write_json(out / "scores.json", doc)
    man.add_outputs(out / "scores.json")
    man.write(out)
    print(json.dumps(doc, sort_keys=True))
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = resolve_config("oracle", args)
    reports = battery.run_battery(cfg["suite"], int(cfg["seed"]))
    doc = battery.battery_document(reports, cfg["suite"])
    print(battery.format_table(reports))
    if args.out_dir:
        out = _out_dir(args)
        man = RunManifest("oracle", cfg)
        _write_json(out / "oracle.json", doc)
        man.add_outputs(out / "oracle.json")
        man.write(out)
    if not doc["passed"]:
        failed = ", ".join(r.oracle for r in reports if not r.passed)
        raise VerificationError(f"oracle battery failed: {failed}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _bool_flag(p, name: str, help: str) -> None:
    p.add_argument(f"--{name}", dest=name.replace("-", "_"), action=argparse.BooleanOptionalAction, default=None, help=help)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvxpref",
        description="Convex two-layer preference heads: extraction, training, fine-tuning, guided scoring.",
        epilog="Exit codes: 0 ok, 2 bad input, 3 solver failure, 4 verification failure.",
    )
    parser.add_argument("--version", action="version", version=f"cvxpref {__version__} ({source_hash()[:12]})")
    parser.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="JSON file of defaults for this command")
        p.set_defaults(func=func)
        return p

    p = add("extract", cmd_extract, "conversations JSONL -> train/eval triplet JSONL")
    p.add_argument("input")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--split", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--template", choices=sorted(extract.TEMPLATES))

    p = add("build-dataset", cmd_build_dataset, "triplets + chosen/rejected features -> classifier dataset")
    p.add_argument("triplets")
    p.add_argument("chosen", help="feature manifest for chosen responses, one row per triplet")
    p.add_argument("rejected", help="feature manifest for rejected responses")
    p.add_argument("--out-dir", required=True)

    p = add("phase1", cmd_phase1, "train the convex two-layer network with ADMM")
    p.add_argument("features")
    p.add_argument("labels")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--patterns", type=int, help="number of sampled activation patterns")
    _bool_flag(p, "enumerate", "enumerate every pattern instead of sampling (tiny inputs only)")
    p.add_argument("--seed", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--gamma-alpha", type=float)
    p.add_argument("--beta-reg", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--stop-tol", type=float)
    p.add_argument("--pcg-tol0", type=float)
    p.add_argument("--prune-tol", type=float)
    _bool_flag(p, "standardize", "standardize feature columns first (default on)")

    p = add("phase2", cmd_phase2, "fine-tune the output layer on the logistic preference loss")
    p.add_argument("net")
    p.add_argument("features")
    p.add_argument("labels")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--standardizer", help="defaults to standardizer.json next to the network")
    p.add_argument("--beta-reward", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--optimizer", choices=["agd", "adam"])
    p.add_argument("--lr", type=float, help="adam learning rate")
    _bool_flag(p, "cold-start", "start from zero instead of the recovered output weights")

    p = add("score", cmd_score, "reweight a candidate pool with a trained head")
    p.add_argument("head")
    p.add_argument("candidates", help="feature manifest, one row per candidate")
    p.add_argument("base_probs", help="JSON list, or object with base_probs and optional step")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--standardizer", help="defaults to standardizer.json next to the head")
    p.add_argument("--lambda", dest="guidance_scale", type=float)
    p.add_argument("--every-n", type=int)
    p.add_argument("--step", type=int)
    p.add_argument("--top-p", type=float)
    p.add_argument("--top-k", type=int)
    p.add_argument("--num-candidates", type=int)

    p = add("oracle", cmd_oracle, "run the oracle battery and print a pass/fail table")
    p.add_argument("--suite", choices=sorted(battery.SUITES))
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except VerificationError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except SolverError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (InputError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
