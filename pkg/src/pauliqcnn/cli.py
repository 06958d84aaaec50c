"""Command-line front end: ``pauliqcnn <subcommand> [--config FILE] [flags]``.

Experiment settings come from a TOML file (or a run manifest written by a
previous run), and flags override individual keys.  Every run writes
``run_<subcommand>.json`` into its output directory with the resolved
configuration, derived seeds, library versions and SHA-256 digests of the
files it wrote; passing that manifest back as ``--config`` repeats the run.

Output directory layout::

    dataset/manifest.csv, dataset/shadows/, dataset/states/
    surrogate/circuit.txt, surrogate/layout.json, surrogate/graph_<j>.npz
    features.csv, active.json, model.json, metrics.csv, eval.csv, predictions.csv
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import platform
import sys
import warnings
from dataclasses import asdict, dataclass, field, fields
from importlib import metadata
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import datasets, learn, purity, shadows
from .circuits import Circuit, QcnnLayout, build_qcnn, readout_observables
from .kernels import backend
from .propagation import (
    TruncationPolicy,
    product_expectation,
    product_values,
    product_state,
    propagate,
    random_bloch,
    statevector_oracle,
    exact_expectation,
)
from .surrogate import ActiveSet, SurrogateGraph, select_active, surrogate_build, surrogate_evaluate

SUBCOMMANDS = ("dataset", "shadows", "features", "select", "surrogate", "train", "eval", "purity", "check")


class ConfigError(ValueError):
    """Invalid experiment configuration (reported as a usage error)."""


class CheckFailure(RuntimeError):
    """An invariant checked by ``check`` does not hold."""


# --------------------------------------------------------------------------- configuration


@dataclass
class ExperimentConfig:
    """Every knob of one experiment; ``None`` means "no cap" / "use the default rule"."""

    model: str = "XXX"
    n: int = 8
    grid: dict = field(default_factory=lambda: {"kind": "line", "vary": "J2", "start": 0.1, "stop": 1.9, "count": 20, "fixed": {"J1": 1.0}})
    labels: list | None = None
    shots: int = 100
    exact: bool = False
    groups: int | None = None
    task: str = "binary"
    layout: str = "brick"
    max_weight: int | None = 2
    max_frequency: int | None = None
    freq_rule: str = "min"
    M: int | None = None
    window: int | None = None
    split: str = "alternate"
    direct_reg: float = 1e-3
    seed: int = 0
    train: dict = field(default_factory=dict)

    def train_config(self) -> learn.TrainConfig:
        return learn.TrainConfig(**{**self.train, "seed": self.seed})

    def policy(self) -> TruncationPolicy:
        return TruncationPolicy(self.max_weight, self.max_frequency, 0.0, self.freq_rule)

    def validate(self) -> None:
        if self.model not in datasets.MODELS:
            raise ConfigError(f"model must be one of {datasets.MODELS}")
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if self.shots < 0:
            raise ConfigError("shots must be non-negative")
        if self.shots == 0 and not self.exact:
            raise ConfigError("shots = 0 needs exact = true")
        if self.task not in learn.TASKS:
            raise ConfigError(f"task must be one of {learn.TASKS}")
        if self.layout not in ("brick", "non-crossing"):
            raise ConfigError("layout must be brick or non-crossing")
        if self.split not in ("alternate", "random"):
            raise ConfigError("split must be alternate or random")
        if self.groups is not None and self.groups < 1:
            raise ConfigError("groups must be positive")
        if self.M is not None and self.M < 1:
            raise ConfigError("M must be positive")
        if self.window is not None and self.window < 1:
            raise ConfigError("window must be positive")
        if self.direct_reg < 0:
            raise ConfigError("direct_reg must be non-negative")
        kind = self.grid.get("kind")
        if kind == "line":
            missing = {"vary", "start", "stop", "count"} - set(self.grid)
        elif kind == "box":
            missing = {"ranges", "per_class"} - set(self.grid)
        else:
            raise ConfigError("grid.kind must be line or box")
        if missing:
            raise ConfigError(f"grid lacks {sorted(missing)}")
        try:
            self.policy()
            self.train_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None


_NULLABLE = {"labels", "groups", "max_weight", "max_frequency", "M", "window"}


def _normalise(raw: dict) -> dict:
    """Map TOML spellings ("none", -1) onto ``None`` for the nullable integer keys."""
    out = dict(raw)
    for k in _NULLABLE & set(out):
        if out[k] in ("none", "None", -1):
            out[k] = None
    return out


def load_config(path) -> dict:
    """Raw key/value dictionary from a TOML file or a run manifest (its ``config`` entry)."""
    path = Path(path)
    if path.suffix == ".json":
        return json.loads(path.read_text())["config"]
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    raw = load_config(args.config) if getattr(args, "config", None) else {}
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    raw = _normalise(raw)
    for name in known:
        v = getattr(args, name, None)
        if v is not None:
            raw[name] = v
    train_over = {k: getattr(args, k) for k in ("loss", "restarts", "max_iter", "init_scale") if getattr(args, k, None) is not None}
    if train_over:
        raw["train"] = {**raw.get("train", {}), **train_over}
    grid_over = {k: getattr(args, k) for k in ("vary", "start", "stop", "count") if getattr(args, k, None) is not None}
    if grid_over:
        base = raw.get("grid") or ExperimentConfig().grid
        raw["grid"] = {**base, **grid_over, "kind": "line"}
    if "train" in raw and "seed" in raw["train"]:
        raise ConfigError("the training seed is derived from the master seed; set seed at top level")
    cfg = ExperimentConfig(**raw)
    cfg.validate()
    return cfg


def substream_seed(seed: int, name: str) -> int:
    """Named u64 seed derived from the master seed."""
    return datasets.state_seed(seed, name, 0)


# --------------------------------------------------------------------------- run manifest


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("pauliqcnn", "numpy", "scipy", "numba"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "unknown"
    out["backend"] = backend()
    return out


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_run_manifest(out: Path, sub: str, argv, cfg: ExperimentConfig | None, outputs, extra: dict | None = None) -> Path:
    files = {}
    for p in sorted({Path(p) for p in outputs}):
        if p.is_file():
            files[str(p.relative_to(out)) if p.is_relative_to(out) else str(p)] = _digest(p)
    record = {
        "subcommand": sub,
        "argv": list(argv),
        "config": asdict(cfg) if cfg is not None else None,
        "seeds": _seeds(cfg) if cfg is not None else {},
        "versions": _versions(),
        "outputs": files,
        **(extra or {}),
    }
    path = out / f"run_{sub}.json"
    path.write_text(json.dumps(record, indent=1, default=_json_default))
    return path


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    raise TypeError(f"not serialisable: {type(o)}")


def _seeds(cfg: ExperimentConfig) -> dict:
    return {
        "master": cfg.seed,
        "dataset": substream_seed(cfg.seed, "dataset"),
        "split": substream_seed(cfg.seed, "split"),
        "shadows": "per state: state_seed(master, 'shadows', state_id)",
        "init": "per restart: SeedSequence(master, spawn_key=(b'init', restart, attempt))",
    }


# --------------------------------------------------------------------------- pipeline stages


def grid_specs(cfg: ExperimentConfig) -> list[datasets.HamiltonianSpec]:
    g = cfg.grid
    fixed = {k: float(v) for k, v in g.get("fixed", {}).items()}
    if g["kind"] == "line":
        return datasets.line_grid(cfg.model, cfg.n, g["vary"], float(g["start"]), float(g["stop"]), int(g["count"]), fixed)
    ranges = {k: (float(a), float(b)) for k, (a, b) in g["ranges"].items()}
    return datasets.balanced_box_grid(cfg.model, cfg.n, ranges, int(g["per_class"]), substream_seed(cfg.seed, "dataset"), fixed)


def stage_dataset(cfg: ExperimentConfig, out: Path) -> list[Path]:
    specs = grid_specs(cfg)
    root = out / "dataset"
    datasets.generate_dataset(specs, cfg.shots, cfg.seed, root, save_states=cfg.exact, labels=cfg.labels)
    return [root / "manifest.csv"]


def stage_surrogate(cfg: ExperimentConfig, out: Path) -> tuple[Circuit, QcnnLayout, list[SurrogateGraph], list[Path]]:
    circuit, layout = build_qcnn(cfg.n, cfg.layout)
    root = out / "surrogate"
    root.mkdir(parents=True, exist_ok=True)
    circuit.save(root / "circuit.txt")
    layout.save(root / "layout.json")
    graphs, written = [], [root / "circuit.txt", root / "layout.json", root / "summary.csv"]
    rows = []
    for j, obs in enumerate(readout_observables(layout, cfg.task)):
        g = surrogate_build(circuit, obs, cfg.policy())
        g.save(root / f"graph_{j}.npz")
        graphs.append(g)
        written.append(root / f"graph_{j}.npz")
        rows.append([j, obs.label, g.n_nodes, g.n_edges, g.n_leaves])
    with open(root / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["graph", "observable", "nodes", "edges", "leaves"])
        w.writerows(rows)
    return circuit, layout, graphs, written


def load_surrogate(out: Path, task: str):
    root = out / "surrogate"
    if not (root / "circuit.txt").exists():
        raise FileNotFoundError(f"{root} holds no surrogate; run the surrogate subcommand first")
    circuit = Circuit.load(root / "circuit.txt")
    layout = QcnnLayout.load(root / "layout.json")
    k = len(readout_observables(layout, task))
    graphs = [SurrogateGraph.load(root / f"graph_{j}.npz") for j in range(k)]
    return circuit, layout, graphs


def candidate_ops(graphs) -> list[str]:
    seen: dict[str, None] = {}
    for g in graphs:
        for lab in g.leaf_labels():
            seen.setdefault(lab, None)
    return list(seen)


def stage_features(cfg: ExperimentConfig, out: Path, graphs) -> tuple[shadows.FeatureTable, list[Path]]:
    manifest = out / "dataset" / "manifest.csv"
    if not manifest.exists():
        raise FileNotFoundError(f"{manifest} not found; run the dataset subcommand first")
    ops = candidate_ops(graphs)
    if cfg.exact:
        table = shadows.exact_feature_table(datasets.load_states(manifest), ops)
    else:
        table = shadows.build_feature_table(datasets.load_shadow_sets(manifest), ops, cfg.groups)
    table.to_csv(out / "features.csv")
    return table, [out / "features.csv"]


def split_rows(cfg: ExperimentConfig, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Train and test row indices: alternating positions, or a seeded random half."""
    if cfg.split == "alternate":
        idx = np.arange(count)
        return idx[0::2], idx[1::2]
    perm = np.random.default_rng(substream_seed(cfg.seed, "split")).permutation(count)
    half = (count + 1) // 2
    return np.sort(perm[:half]), np.sort(perm[half:])


def stage_select(cfg: ExperimentConfig, out: Path, graphs, train_table) -> tuple[list[ActiveSet], list[Path]]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        active = [select_active(g, train_table, cfg.M, cfg.window) for g in graphs]
    record = {
        "M": cfg.M,
        "window": cfg.window,
        "sets": [
            {"indices": a.indices.tolist(), "labels": a.labels(g), "variance": [repr(float(v)) for v in a.scores], "truncated_request": a.truncated_request}
            for a, g in zip(active, graphs)
        ],
    }
    (out / "active.json").write_text(json.dumps(record, indent=1))
    return active, [out / "active.json"]


def load_active(out: Path) -> list[ActiveSet]:
    rec = json.loads((out / "active.json").read_text())
    return [ActiveSet(np.asarray(s["indices"], dtype=np.int64)) for s in rec["sets"]]


def stage_train(cfg: ExperimentConfig, out: Path, model: learn.Model, table: shadows.FeatureTable) -> tuple[dict, list[Path]]:
    tr_idx, te_idx = split_rows(cfg, len(table))
    train_t, test_t = table.subset(tr_idx), table.subset(te_idx)
    result = learn.train(model, train_t, cfg.train_config())
    train_ev = learn.evaluate(model, train_t)
    test_ev = learn.evaluate(model, test_t)
    per_run = [learn.evaluate(model, test_t, r.theta).accuracy for r in result.runs]
    direct = learn.lowbody_direct_classifier(train_t.select(_active_union(model)), cfg.direct_reg, model.n_classes)
    metrics = {
        "train_accuracy": train_ev.accuracy,
        "test_accuracy": test_ev.accuracy,
        "best_of_restarts_test_accuracy": max(per_run),
        "mean_restart_test_accuracy": float(np.mean(per_run)),
        "restart_test_accuracy": per_run,
        "restart_train_loss": result.losses,
        "best_run": result.best_run,
        "direct_train_accuracy": direct.train_accuracy,
        "direct_test_accuracy": direct.accuracy(test_t),
        "confusion_test": test_ev.confusion.tolist(),
    }
    model.meta["graph_files"] = [f"surrogate/graph_{j}.npz" for j in range(len(model.graphs))]
    model.save(out / "model.json", metrics, "surrogate/circuit.txt")
    written = [out / "model.json", out / "metrics.csv", out / "eval.csv", out / "predictions.csv"]
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "loss", "train_acc"])
        for it, lo, acc in learn.history_rows(result, model, train_t):
            w.writerow([it, repr(lo), "" if math.isnan(acc) else repr(acc)])
    with open(out / "eval.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "restart", "value"])
        for r, (lo, acc) in enumerate(zip(result.losses, per_run)):
            w.writerow(["restart_train_loss", r, repr(lo)])
            w.writerow(["restart_test_accuracy", r, repr(acc)])
        for key in ("train_accuracy", "test_accuracy", "best_of_restarts_test_accuracy", "mean_restart_test_accuracy", "direct_train_accuracy", "direct_test_accuracy"):
            w.writerow([key, "", repr(metrics[key])])
    _write_predictions(out / "predictions.csv", model, table, tr_idx)
    return metrics, written


def _active_union(model: learn.Model) -> list[str]:
    seen: dict[str, None] = {}
    for labels in model.active_labels():
        for lab in labels:
            seen.setdefault(lab, None)
    return list(seen)


def _write_predictions(path: Path, model: learn.Model, table: shadows.FeatureTable, train_rows) -> None:
    e = model.expectations(table)
    pred = learn.predict_labels(model, table)
    in_train = np.zeros(len(table), dtype=bool)
    in_train[train_rows] = True
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state_id", "split", "label", "predicted"] + [f"expectation_{o.label}" for o in model.observables])
        for i in range(len(table)):
            split = "train" if in_train[i] else "test"
            w.writerow([int(table.state_ids[i]), split, int(table.labels[i]), int(pred[i])] + [repr(float(v)) for v in e[i]])


# --------------------------------------------------------------------------- subcommands


def cmd_dataset(args, cfg, out):
    return stage_dataset(cfg, out), {}


def cmd_surrogate(args, cfg, out):
    _, _, graphs, written = stage_surrogate(cfg, out)
    print(f"built {len(graphs)} graph(s); leaves {[g.n_leaves for g in graphs]}, edges {[g.n_edges for g in graphs]}")
    return written, {}


def cmd_features(args, cfg, out):
    _, _, graphs = load_surrogate(out, cfg.task)
    table, written = stage_features(cfg, out, graphs)
    print(f"features: {len(table)} states x {len(table.ops)} operators")
    return written, {}


def cmd_select(args, cfg, out):
    _, _, graphs = load_surrogate(out, cfg.task)
    table = shadows.FeatureTable.from_csv(out / "features.csv")
    tr_idx, _ = split_rows(cfg, len(table))
    active, written = stage_select(cfg, out, graphs, table.subset(tr_idx))
    print(f"active operators per graph: {[len(a) for a in active]}")
    return written, {}


def cmd_train(args, cfg, out):
    """Full pipeline: dataset, surrogate, features, selection, training and evaluation."""
    written = stage_dataset(cfg, out)
    circuit, layout, graphs, w = stage_surrogate(cfg, out)
    written += w
    table, w = stage_features(cfg, out, graphs)
    written += w
    tr_idx, _ = split_rows(cfg, len(table))
    active, w = stage_select(cfg, out, graphs, table.subset(tr_idx))
    written += w
    obs = readout_observables(layout, cfg.task)
    model = learn.Model(circuit, layout, obs, graphs, active, np.zeros(circuit.n_params), cfg.task, {"policy": asdict(cfg.policy())})
    metrics, w = stage_train(cfg, out, model, table)
    written += w
    print(f"train accuracy {metrics['train_accuracy']:.4f}")
    print(
        f"test accuracy {metrics['test_accuracy']:.4f} (over {len(metrics['restart_test_accuracy'])} restarts: "
        f"best {metrics['best_of_restarts_test_accuracy']:.4f}, mean {metrics['mean_restart_test_accuracy']:.4f})"
    )
    print(f"direct low-body classifier test accuracy {metrics['direct_test_accuracy']:.4f}")
    return written, {"metrics": metrics}


def cmd_eval(args, cfg, out):
    model_path = Path(args.model_file) if args.model_file else out / "model.json"
    model = learn.load_model(model_path)
    table = shadows.FeatureTable.from_csv(Path(args.features) if args.features else out / "features.csv")
    tr_idx, te_idx = split_rows(cfg, len(table))
    rows = {"train": tr_idx, "test": te_idx, "all": np.arange(len(table))}[args.rows]
    ev = learn.evaluate(model, table.subset(rows))
    path = out / f"confusion_{args.rows}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["true"] + [f"pred_{k}" for k in range(model.n_classes)])
        for k, row in enumerate(ev.confusion):
            w.writerow([k] + row.tolist())
    print(f"{args.rows} accuracy {ev.accuracy:.4f}")
    return [path], {"accuracy": ev.accuracy}


def cmd_shadows(args, cfg, out):
    """Per-state estimates with standard errors for a list of operators."""
    manifest = out / "dataset" / "manifest.csv"
    sets = datasets.load_shadow_sets(manifest)
    ops = [o.strip() for o in args.ops.split(",") if o.strip()]
    for o in ops:
        if len(o) != sets[0].n:
            raise ConfigError(f"operator {o!r} does not have length {sets[0].n}")
    path = out / "estimates.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state_id", "label", "operator", "estimate", "stderr"])
        for s in sets:
            for o in ops:
                w.writerow([s.state_id, s.label, o, repr(shadows.estimate(s, o, cfg.groups)), repr(shadows.standard_error(s, o))])
    return [path], {}


def cmd_purity(args, cfg, out):
    method = args.method
    if method == "recursive":
        dist = purity.purities_recursive(args.layers, args.n)
    else:
        n = args.n or 2**args.layers
        _, layout = build_qcnn(n, args.layout)
        if method == "network":
            dist = purity.purities_network(layout)
        else:
            seed = substream_seed(args.seed, "purity")
            dist = purity.purities_mc(layout, args.samples, seed)
    path = Path(args.csv) if args.csv else out / f"purity_{method}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    dist.to_csv(path)
    for k in sorted(dist.values):
        print(f"k={k} p={dist.values[k]:.6e}")
    return [path], {"convention": dist.convention}


def run_check(n: int, trials: int, seed: int, layout_style: str = "brick", tol: float = 1e-9, surrogate: bool = True) -> list[dict]:
    """Compare untruncated propagation (and the surrogate) with the statevector oracle on random product inputs."""
    circuit, layout = build_qcnn(n, layout_style)
    obs = readout_observables(layout, "binary")[0]
    graph = surrogate_build(circuit, obs, TruncationPolicy.exact()) if surrogate else None
    rng = np.random.default_rng(substream_seed(seed, "check"))
    rows = []
    for t in range(trials):
        theta = rng.uniform(-math.pi, math.pi, circuit.n_params)
        bloch = random_bloch(n, rng)
        ref = exact_expectation(statevector_oracle(circuit, theta, product_state(bloch)), obs)
        pp = product_expectation(propagate(circuit, obs, theta, TruncationPolicy.exact()), bloch)
        row = {"trial": t, "oracle": ref, "propagate": pp, "gap_propagate": abs(pp - ref)}
        if graph is not None:
            feats = product_values(graph.leaf_x, graph.leaf_z, n, bloch)
            sv = surrogate_evaluate(graph, None, theta, feats)
            row.update(surrogate=sv, gap_surrogate=abs(sv - ref))
        row["ok"] = row["gap_propagate"] < tol and row.get("gap_surrogate", 0.0) < tol
        rows.append(row)
    return rows


def cmd_check(args, cfg, out):
    rows = run_check(args.n, args.trials, args.seed, args.layout, args.tol, not args.no_surrogate)
    path = out / "check.csv"
    keys = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for r in rows:
            w.writerow([repr(r[k]) if isinstance(r[k], float) else r[k] for k in keys])
    worst = max(max(r["gap_propagate"], r.get("gap_surrogate", 0.0)) for r in rows)
    failed = [r["trial"] for r in rows if not r["ok"]]
    print(f"n={args.n} trials={args.trials} max gap {worst:.3e} (tolerance {args.tol:g})")
    if failed:
        raise CheckFailure(f"oracle gap above tolerance in trials {failed}")
    return [path], {"max_gap": worst}


# --------------------------------------------------------------------------- argument parsing


def _none_or_int(text: str):
    return None if text.lower() == "none" else int(text)


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML experiment file or a run_<subcommand>.json manifest")
    p.add_argument("--model", choices=datasets.MODELS)
    p.add_argument("--n", type=int)
    p.add_argument("--shots", type=int)
    p.add_argument("--exact", action="store_true", default=None, help="exact expectations instead of shadows")
    p.add_argument("--groups", type=_none_or_int, help="median-of-means group count")
    p.add_argument("--task", choices=learn.TASKS)
    p.add_argument("--layout", choices=("brick", "non-crossing"))
    p.add_argument("--k", dest="max_weight", type=_none_or_int, help="Pauli weight cap")
    p.add_argument("--max-frequency", dest="max_frequency", type=_none_or_int)
    p.add_argument("--freq-rule", dest="freq_rule", choices=("min", "max"))
    p.add_argument("--M", dest="M", type=_none_or_int, help="operator budget per readout observable")
    p.add_argument("--window", type=_none_or_int)
    p.add_argument("--split", choices=("alternate", "random"))
    p.add_argument("--direct-reg", dest="direct_reg", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--loss", choices=learn.LOSSES)
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--init-scale", dest="init_scale", type=float)
    p.add_argument("--vary", help="line grid: parameter to sweep")
    p.add_argument("--start", type=float)
    p.add_argument("--stop", type=float)
    p.add_argument("--count", type=int)
    p.add_argument("--out", default="run", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pauliqcnn", description="Pauli-propagation surrogates of QCNN phase classifiers.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "dataset": "ground states, labels and shadow files for a parameter grid",
        "shadows": "per-state shadow estimates with standard errors for given operators",
        "features": "feature table over the surrogate's leaf operators",
        "select": "variance-ranked active operator sets",
        "surrogate": "build the QCNN and one surrogate graph per readout observable",
        "train": "full pipeline ending in a trained model and metrics",
        "eval": "accuracy and confusion counts of a saved model",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        _add_experiment_flags(p)
        if name == "shadows":
            p.add_argument("--ops", required=True, help="comma-separated Pauli strings")
        if name == "eval":
            p.add_argument("--model-file", dest="model_file", help="model record (default OUT/model.json)")
            p.add_argument("--features", help="feature CSV (default OUT/features.csv)")
            p.add_argument("--rows", choices=("train", "test", "all"), default="test")
    p = sub.add_parser("purity", help="average k-purities of a Haar-random QCNN")
    p.add_argument("--config", help="run_purity.json manifest whose arguments to repeat")
    p.add_argument("--layers", type=int)
    p.add_argument("--method", choices=("recursive", "network", "mc"), default="recursive")
    p.add_argument("--n", type=int, help="qubits (default 2**layers)")
    p.add_argument("--layout", choices=("brick", "non-crossing"), default="non-crossing")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", dest="csv", help="CSV output path")
    p.add_argument("--dir", default=".", help="directory for the run manifest")
    p = sub.add_parser("check", help="propagation and surrogate against the statevector oracle")
    p.add_argument("--config", help="run_check.json manifest whose arguments to repeat")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--layout", choices=("brick", "non-crossing"), default="brick")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--no-surrogate", action="store_true")
    p.add_argument("--out", default=".", help="directory for check.csv")
    return parser


_COMMANDS = {
    "dataset": cmd_dataset,
    "shadows": cmd_shadows,
    "features": cmd_features,
    "select": cmd_select,
    "surrogate": cmd_surrogate,
    "train": cmd_train,
    "eval": cmd_eval,
    "purity": cmd_purity,
    "check": cmd_check,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    cmd = args.command
    try:
        if cmd in ("purity", "check"):
            if args.config:
                # repeat the recorded arguments; flags given now take precedence
                rec = json.loads(Path(args.config).read_text())
                if rec.get("subcommand") != cmd:
                    raise ConfigError(f"{args.config} is not a {cmd} manifest")
                rest = [a for a in argv[1:] if a != args.config and a != "--config" and not a.startswith("--config=")]
                argv = [cmd] + list(rec["argv"][1:]) + rest
                args = parser.parse_args(argv)
            cfg = None
            if cmd == "purity" and args.layers is None:
                raise ConfigError("--layers is required")
            out = Path(args.dir if cmd == "purity" else args.out)
            if cmd == "purity" and (args.layers < 1 or (args.method == "mc" and args.samples < 2)):
                raise ConfigError("layers must be positive and mc needs at least two samples")
            if cmd == "check" and (args.n < 2 or args.trials < 1):
                raise ConfigError("check needs n >= 2 and at least one trial")
        else:
            cfg = resolve_config(args)
            out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        written, extra = _COMMANDS[cmd](args, cfg, out)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"pauliqcnn {cmd}: error: {exc}", file=sys.stderr)
        return 2
    except CheckFailure as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, datasets.LabelError, KeyError, ValueError) as exc:
        print(f"pauliqcnn {cmd}: {exc}", file=sys.stderr)
        return 1
    write_run_manifest(out, cmd, argv, cfg, written, extra)
    return 0


if __name__ == "__main__":
    sys.exit(main())
