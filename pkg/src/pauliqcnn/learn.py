"""Classifiers on top of surrogate graphs: predictions, losses, L-BFGS training and a direct low-body baseline.

Every readout observable has its own surrogate graph and active leaf set.  For
a feature matrix ``X_g`` (states x active leaves of graph ``g``) the predicted
expectations are ``X_g @ c_g(theta)``, so one forward and one backward sweep per
graph give the loss and its exact gradient for the whole training set.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.optimize

from .circuits import Circuit, QcnnLayout, build_qcnn, readout_observables
from .paulis import PauliString
from .propagation import TruncationPolicy
from .shadows import FeatureTable
from .surrogate import ActiveSet, SurrogateGraph, select_active, surrogate_build

EPS = 1e-9
TASKS = ("binary", "four-class")
LOSSES = ("cross-entropy", "mse")
# four-class readout: class 2*b1 + b2 for outcome bits (b1, b2) of the two readout qubits
_BITS = np.array([[0, 0], [0, 1], [1, 0], [1, 1]])
_SIGNS = 1 - 2 * _BITS


@dataclass
class TrainConfig:
    loss: str = "cross-entropy"
    max_iter: int = 200
    restarts: int = 5
    seed: int = 0
    memory: int = 10
    tol: float = 1e-9
    init_scale: float = 0.1 * math.pi
    max_line_search_retries: int = 3

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.max_iter < 1 or self.restarts < 1 or self.memory < 1:
            raise ValueError("iteration, restart and memory counts must be positive")
        if self.init_scale < 0 or self.tol < 0:
            raise ValueError("init_scale and tol must be non-negative")


@dataclass
class Model:
    """Circuit, readout observables, one surrogate graph and active set per observable, and ``theta``."""

    circuit: Circuit
    layout: QcnnLayout
    observables: list[PauliString]
    graphs: list[SurrogateGraph]
    active: list[ActiveSet]
    theta: np.ndarray
    task: str = "binary"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if len(self.graphs) != len(self.observables) or len(self.active) != len(self.graphs):
            raise ValueError("one graph and one active set per observable")
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.size != self.circuit.n_params:
            raise ValueError("theta length differs from the circuit's parameter count")

    @property
    def n_classes(self) -> int:
        return 2 if self.task == "binary" else 4

    def active_labels(self) -> list[list[str]]:
        return [a.labels(g) for a, g in zip(self.active, self.graphs)]

    def candidate_labels(self) -> list[str]:
        """Union of all leaf operators, in first-seen order."""
        seen: dict[str, None] = {}
        for g in self.graphs:
            for lab in g.leaf_labels():
                seen.setdefault(lab, None)
        return list(seen)

    def design(self, features: FeatureTable) -> list[np.ndarray]:
        """Feature matrices aligned with each graph's active leaves."""
        return [features.select(labels).values for labels in self.active_labels()]

    def expectations(self, features: FeatureTable, theta=None) -> np.ndarray:
        theta = self.theta if theta is None else theta
        X = self.design(features)
        return np.stack([x @ a.evaluator(g).coefficients(theta) for x, a, g in zip(X, self.active, self.graphs)], axis=1)

    def save(self, path, metrics: dict | None = None, circuit_file: str | None = None) -> None:
        record = {
            "format": "pauliqcnn-model/1",
            "task": self.task,
            "n": self.circuit.n,
            "circuit_file": circuit_file,
            "layout": json.loads(self.layout.to_json()),
            "observables": [o.label for o in self.observables],
            "graph_files": self.meta.get("graph_files"),
            "active_sets": self.active_labels(),
            "active_indices": [a.indices.tolist() for a in self.active],
            "theta": [repr(float(t)) for t in self.theta],
            "policy": self.meta.get("policy"),
            "metrics": metrics or {},
        }
        Path(path).write_text(json.dumps(record, indent=1))


def load_model(path, graphs: Sequence[SurrogateGraph] | None = None, circuit: Circuit | None = None) -> Model:
    """Rebuild a model record; graphs are loaded from the recorded files unless given."""
    path = Path(path)
    rec = json.loads(path.read_text())
    layout = QcnnLayout.from_json(json.dumps(rec["layout"]))
    if circuit is None:
        if rec.get("circuit_file"):
            circuit = Circuit.load(path.parent / rec["circuit_file"])
        else:
            circuit, _ = build_qcnn(layout.n, layout.style)
    if graphs is None:
        files = rec.get("graph_files")
        if not files:
            raise ValueError("model record names no graph files; pass graphs explicitly")
        graphs = [SurrogateGraph.load(path.parent / f) for f in files]
    active = [ActiveSet(np.asarray(idx, dtype=np.int64)) for idx in rec["active_indices"]]
    theta = np.array([float(t) for t in rec["theta"]])
    obs = [PauliString.from_label(o) for o in rec["observables"]]
    return Model(circuit, layout, obs, list(graphs), active, theta, rec["task"], {"graph_files": rec.get("graph_files"), "policy": rec.get("policy")})


def build_model(
    n: int,
    task: str = "binary",
    policy: TruncationPolicy | None = None,
    layout_style: str = "brick",
    circuit: Circuit | None = None,
    layout: QcnnLayout | None = None,
) -> Model:
    """QCNN with one surrogate graph per readout observable; every leaf starts active."""
    if circuit is None or layout is None:
        circuit, layout = build_qcnn(n, layout_style)
    policy = policy or TruncationPolicy(min_coeff=0.0)
    obs = readout_observables(layout, task)
    graphs = [surrogate_build(circuit, o, policy) for o in obs]
    active = [ActiveSet.all(g) for g in graphs]
    meta = {"policy": {"max_weight": policy.max_weight, "max_frequency": policy.max_frequency, "freq_rule": policy.freq_rule}}
    return Model(circuit, layout, obs, graphs, active, np.zeros(circuit.n_params), task, meta)


def select_features(model: Model, features: FeatureTable, M: int | None, window: int | None = None) -> None:
    """Keep the ``M`` highest-variance leaves (inside ``window``) of every graph."""
    model.active = [select_active(g, features, M, window) for g in model.graphs]


# --------------------------------------------------------------------------- predictions


def binary_probability(z: np.ndarray) -> np.ndarray:
    """``P(label 1) = (1 + <Z>) / 2`` with ``<Z>`` clipped to [-1, 1]."""
    return (1.0 + np.clip(z, -1.0, 1.0)) / 2.0


def multiclass_probabilities(e: np.ndarray) -> np.ndarray:
    """Bitstring probabilities from ``(<Z_a>, <Z_b>, <Z_a Z_b>)`` rows, clipped at 0 and renormalized."""
    e = np.atleast_2d(e)
    raw = (1.0 + e[:, [0]] * _SIGNS[None, :, 0] + e[:, [1]] * _SIGNS[None, :, 1] + e[:, [2]] * (_SIGNS[:, 0] * _SIGNS[:, 1])[None, :]) / 4.0
    q = np.maximum(raw, 0.0)
    return q / q.sum(axis=1, keepdims=True)


def predict_binary(model: Model, feature_row) -> float:
    table = _single_row(model, feature_row)
    return float(binary_probability(model.expectations(table)[:, 0])[0])


def predict_multiclass(model: Model, feature_row) -> np.ndarray:
    table = _single_row(model, feature_row)
    return multiclass_probabilities(model.expectations(table))[0]


def _single_row(model: Model, feature_row) -> FeatureTable:
    if isinstance(feature_row, FeatureTable):
        return feature_row
    ops = model.candidate_labels()
    needed = {lab for labels in model.active_labels() for lab in labels}
    vals = [feature_row.get(op, 0.0) if op not in needed else feature_row[op] for op in ops]
    return FeatureTable(ops, [0], [0], np.array([vals]))


def predict_labels(model: Model, features: FeatureTable, theta=None) -> np.ndarray:
    e = model.expectations(features, theta)
    if model.task == "binary":
        return (binary_probability(e[:, 0]) >= 0.5).astype(np.int64)
    return np.argmax(multiclass_probabilities(e), axis=1)


# --------------------------------------------------------------------------- losses


def loss(predictions, labels, kind: str = "cross-entropy") -> float:
    """Loss of probabilities (binary: ``P(1)`` per state; multiclass: rows) against integer labels.

    Cross-entropy floors probabilities at ``1e-9``.  Binary MSE compares
    ``2p - 1`` (the clipped expectation) with targets ``+-1``; multiclass MSE
    compares probability rows with one-hot targets.
    """
    return _loss_and_grad(np.asarray(predictions, dtype=np.float64), np.asarray(labels), kind)[0]


def _loss_and_grad(p: np.ndarray, y: np.ndarray, kind: str):
    N = y.shape[0]
    if p.ndim == 1:
        if kind == "cross-entropy":
            pc = np.clip(p, EPS, 1 - EPS)
            inside = (p > EPS) & (p < 1 - EPS)
            L = -np.mean(y * np.log(pc) + (1 - y) * np.log(1 - pc))
            g = np.where(inside, -(y / pc - (1 - y) / (1 - pc)), 0.0) / N
        else:
            t = 2.0 * y - 1.0
            L = np.mean((t - (2 * p - 1)) ** 2)
            g = -4.0 * (t - (2 * p - 1)) / N
        return float(L), g
    if kind == "cross-entropy":
        py = p[np.arange(N), y]
        pc = np.maximum(py, EPS)
        L = -np.mean(np.log(pc))
        g = np.zeros_like(p)
        g[np.arange(N), y] = np.where(py > EPS, -1.0 / pc, 0.0) / N
        return float(L), g
    onehot = np.eye(p.shape[1])[y]
    L = np.mean(np.sum((onehot - p) ** 2, axis=1))
    return float(L), -2.0 * (onehot - p) / N


class Objective:
    """Training loss as a function of ``theta`` with its exact gradient."""

    def __init__(self, model: Model, features: FeatureTable, kind: str = "cross-entropy"):
        self.model = model
        self.kind = kind
        self.X = model.design(features)
        self.y = np.asarray(features.labels, dtype=np.int64)
        if model.task == "binary" and np.any((self.y < 0) | (self.y > 1)):
            raise ValueError("binary labels must be 0 or 1")
        if model.task == "four-class" and np.any((self.y < 0) | (self.y > 3)):
            raise ValueError("four-class labels must lie in 0..3")
        self.evaluators = [a.evaluator(g) for a, g in zip(model.active, model.graphs)]

    def expectations(self, theta) -> np.ndarray:
        return np.stack([x @ ev.coefficients(theta) for x, ev in zip(self.X, self.evaluators)], axis=1)

    def value_and_grad(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        parts = [ev.coefficients_and_vjp(theta) for ev in self.evaluators]
        e = np.stack([x @ c for x, (c, _) in zip(self.X, parts)], axis=1)
        if self.model.task == "binary":
            z = e[:, 0]
            p = binary_probability(z)
            L, dp = _loss_and_grad(p, self.y, self.kind)
            de = (dp * 0.5 * ((z > -1.0) & (z < 1.0)))[:, None]
        else:
            raw = (1.0 + e @ np.stack([_SIGNS[:, 0], _SIGNS[:, 1], _SIGNS[:, 0] * _SIGNS[:, 1]]) ) / 4.0
            q = np.maximum(raw, 0.0)
            s = q.sum(axis=1, keepdims=True)
            p = q / s
            L, dp = _loss_and_grad(p, self.y, self.kind)
            # p = q / sum(q): dq = (dp - <dp, p>) / s, then through the clip
            dq = (dp - np.sum(dp * p, axis=1, keepdims=True)) / s
            draw = dq * (raw > 0.0)
            basis = np.stack([_SIGNS[:, 0], _SIGNS[:, 1], _SIGNS[:, 0] * _SIGNS[:, 1]])
            de = draw @ basis.T / 4.0
        grad = np.zeros_like(theta)
        for k, (x, (_, vjp)) in enumerate(zip(self.X, parts)):
            grad += vjp(x.T @ de[:, k])
        return L, grad

    def __call__(self, theta) -> float:
        return self.value_and_grad(theta)[0]


# --------------------------------------------------------------------------- training


@dataclass
class RunResult:
    theta: np.ndarray
    history: list[float]
    final_loss: float
    status: int
    message: str
    line_search_failures: int


@dataclass
class TrainResult:
    theta: np.ndarray
    history: list[float]
    runs: list[RunResult]
    best_run: int

    @property
    def losses(self) -> list[float]:
        return [r.final_loss for r in self.runs]


def init_theta(n_params: int, cfg: TrainConfig, restart: int, attempt: int = 0) -> np.ndarray:
    ss = np.random.SeedSequence(cfg.seed, spawn_key=(int.from_bytes(b"init", "little"), restart, attempt))
    return np.random.default_rng(ss).uniform(-cfg.init_scale, cfg.init_scale, n_params)


def _run(obj: Objective, theta0: np.ndarray, cfg: TrainConfig):
    cache: dict[bytes, tuple[float, np.ndarray]] = {}

    def fun(t):
        key = t.tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = obj.value_and_grad(t)
        return cache[key]

    history = [fun(theta0)[0]]

    def callback(xk):
        history.append(fun(np.asarray(xk))[0])

    res = scipy.optimize.minimize(
        fun,
        theta0,
        jac=True,
        method="L-BFGS-B",
        callback=callback,
        options={"maxiter": cfg.max_iter, "maxcor": cfg.memory, "ftol": cfg.tol, "gtol": cfg.tol},
    )
    final = fun(res.x)[0]
    return np.asarray(res.x), history, final, int(res.status), str(res.message)


def train(model: Model, features: FeatureTable, cfg: TrainConfig | None = None) -> TrainResult:
    """Minimise the training loss with L-BFGS from ``cfg.restarts`` small random initialisations.

    A run that ends in a line-search failure without lowering the loss is
    retried from a fresh initialisation (counted).  ``model.theta`` is set to
    the run with the lowest final training loss.
    """
    cfg = cfg or TrainConfig()
    obj = Objective(model, features, cfg.loss)
    runs = []
    for r in range(cfg.restarts):
        failures = 0
        while True:
            theta0 = init_theta(model.circuit.n_params, cfg, r, failures)
            theta, hist, final, status, msg = _run(obj, theta0, cfg)
            abnormal = status == 2 and final >= hist[0]
            if not abnormal or failures >= cfg.max_line_search_retries:
                break
            failures += 1
        runs.append(RunResult(theta, hist, final, status, msg, failures))
    best = int(np.argmin([r.final_loss for r in runs]))
    model.theta = runs[best].theta.copy()
    return TrainResult(model.theta.copy(), runs[best].history, runs, best)


@dataclass
class Evaluation:
    accuracy: float
    confusion: np.ndarray

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "confusion": self.confusion.tolist()}


def evaluate(model: Model, features: FeatureTable, theta=None) -> Evaluation:
    """Decision accuracy and confusion counts (rows: true class, columns: predicted)."""
    pred = predict_labels(model, features, theta)
    y = np.asarray(features.labels, dtype=np.int64)
    k = model.n_classes
    conf = np.zeros((k, k), dtype=np.int64)
    np.add.at(conf, (y, pred), 1)
    return Evaluation(float(np.mean(pred == y)) if y.size else math.nan, conf)


# --------------------------------------------------------------------------- direct baseline


@dataclass
class DirectClassifier:
    """Ridge fit of ``+-1`` (one-vs-rest) targets as a linear functional of low-body features."""

    ops: list[str]
    weights: np.ndarray
    bias: np.ndarray
    n_classes: int
    reg: float
    train_accuracy: float

    def scores(self, features: FeatureTable) -> np.ndarray:
        X = features.select(self.ops).values
        return X @ self.weights + self.bias[None, :]

    def predict(self, features: FeatureTable) -> np.ndarray:
        s = self.scores(features)
        if self.n_classes == 2:
            return (s[:, 0] >= 0).astype(np.int64)
        return np.argmax(s, axis=1)

    def accuracy(self, features: FeatureTable) -> float:
        return float(np.mean(self.predict(features) == features.labels))


def lowbody_direct_classifier(
    features: FeatureTable, reg: float, n_classes: int | None = None, include_identity: bool = True
) -> DirectClassifier:
    """Best low-body operator for the labels under ridge-regularised least squares.

    Minimises ``(1/N) sum_i (y_i - <O>_i)**2 + reg * |w|**2`` over operators
    ``O = b I + sum_j w_j P_j`` spanned by the table's operators (the identity
    coefficient ``b`` is not penalised and is dropped with
    ``include_identity=False``).  Binary targets are ``+-1`` with decision
    ``<O> >= 0``; more classes use one-vs-rest targets and the argmax.
    """
    X = np.asarray(features.values, dtype=np.float64)
    y = np.asarray(features.labels, dtype=np.int64)
    N, M = X.shape
    k = n_classes or max(2, int(y.max()) + 1)
    T = (2.0 * (y == 1) - 1.0)[:, None] if k == 2 else 2.0 * np.eye(k)[y] - 1.0
    if reg < 0:
        raise ValueError("regularisation must be non-negative")
    if include_identity:
        mu_x, mu_t = X.mean(axis=0), T.mean(axis=0)
        Xc, Tc = X - mu_x, T - mu_t
    else:
        Xc, Tc = X, T
    if reg == 0:
        A = Xc.T @ Xc / N
        if np.linalg.matrix_rank(A) < M:
            raise np.linalg.LinAlgError("singular normal equations; use a positive regularisation")
        W = np.linalg.solve(A, Xc.T @ Tc / N)
    elif M > N:
        # dual form: (X^T X / N + reg I)^-1 X^T = X^T (X X^T / N + reg I)^-1
        W = Xc.T @ np.linalg.solve(Xc @ Xc.T / N + reg * np.eye(N), Tc / N)
    else:
        W = np.linalg.solve(Xc.T @ Xc / N + reg * np.eye(M), Xc.T @ Tc / N)
    b = (mu_t - mu_x @ W) if include_identity else np.zeros(T.shape[1])
    clf = DirectClassifier(list(features.ops), W, b, k, reg, 0.0)
    clf.train_accuracy = clf.accuracy(features)
    return clf


def history_rows(result: TrainResult, model: Model, features: FeatureTable) -> list[tuple[int, float, float]]:
    """``(iteration, loss, train_acc)`` rows for the best run (accuracy at the final iterate)."""
    acc = evaluate(model, features, result.theta).accuracy
    rows = [(i, float(v), math.nan) for i, v in enumerate(result.history)]
    if rows:
        rows[-1] = (rows[-1][0], rows[-1][1], acc)
    return rows


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
