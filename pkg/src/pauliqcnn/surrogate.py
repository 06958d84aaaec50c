"""Pauli propagation surrogate: a split/merge graph built once, evaluated at any angles.

Every node stands for a Pauli string at one stage of the backward sweep.  A
rotation that anticommutes with the string creates fresh nodes joined to their
parents by ``cos`` or ``+-sin`` edges of that gate's angle; strings it commutes
with keep their node, so pass-through edges are never stored.  The value of a
leaf node at ``theta`` is the coefficient the numeric propagation would give.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .circuits import Circuit
from .kernels import dense as kd
from .kernels import graph as kg
from .kernels import propagate as kp
from .paulis import PauliString, PauliSum, arrays_to_strings, letter_codes, strings_to_arrays
from .propagation import (
    TermStore,
    TruncationPolicy,
    _dense_output,
    _finish,
    _gate_tuples,
    _initial,
    use_dense,
)

FORMAT_VERSION = "pauliqcnn-surrogate/1"
DEFAULT_MAX_EDGES = 400_000_000


class SurrogateResourceError(MemoryError):
    """Raised when a build would exceed its edge budget."""


@dataclass
class SurrogateGraph:
    """Edge list of the split/merge DAG plus the leaf table.

    Attributes
    ----------
    roots, root_coeffs
        Nodes holding the observable terms before any gate.
    esrc, edst, ekind
        Edges in creation order; ``ekind`` is 1 (cos), 2 (+sin) or 3 (-sin).
    step_ptr, step_param
        Edges ``step_ptr[g]:step_ptr[g+1]`` belong to one gate with angle ``theta[step_param[g]]``.
    leaf_x, leaf_z, leaf_node, leaf_freq
        Surviving strings in canonical order with their node and path frequency.
    """

    n: int
    n_params: int
    n_nodes: int
    roots: np.ndarray
    root_coeffs: np.ndarray
    esrc: np.ndarray
    edst: np.ndarray
    ekind: np.ndarray
    step_ptr: np.ndarray
    step_param: np.ndarray
    leaf_x: np.ndarray
    leaf_z: np.ndarray
    leaf_node: np.ndarray
    leaf_freq: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_edges(self) -> int:
        return int(self.esrc.size)

    @property
    def n_leaves(self) -> int:
        return int(self.leaf_node.size)

    def leaves(self) -> list[PauliString]:
        return arrays_to_strings(self.leaf_x, self.leaf_z, self.n)

    def leaf_labels(self) -> list[str]:
        codes = letter_codes(self.leaf_x, self.leaf_z, self.n)
        return ["".join("IXYZ"[c] for c in row) for row in codes]

    def leaf_weights(self) -> np.ndarray:
        return (letter_codes(self.leaf_x, self.leaf_z, self.n) > 0).sum(axis=1)

    def leaf_coefficients(self, theta) -> np.ndarray:
        """Coefficient of every leaf at ``theta``."""
        return SurrogateEvaluator(self).coefficients(theta)

    def save(self, path) -> None:
        meta = dict(self.meta, version=FORMAT_VERSION, n=self.n, n_params=self.n_params, n_nodes=self.n_nodes)
        np.savez(
            path,
            meta=np.array(json.dumps(meta, sort_keys=True)),
            roots=self.roots,
            root_coeffs=self.root_coeffs,
            esrc=self.esrc,
            edst=self.edst,
            ekind=self.ekind,
            step_ptr=self.step_ptr,
            step_param=self.step_param,
            leaf_pauli=np.array(self.leaf_labels(), dtype=np.str_),
            leaf_node=self.leaf_node,
            leaf_freq=self.leaf_freq,
        )

    @classmethod
    def load(cls, path) -> "SurrogateGraph":
        with np.load(path, allow_pickle=False) as d:
            meta = json.loads(str(d["meta"]))
            if meta.get("version") != FORMAT_VERSION:
                raise ValueError(f"unsupported surrogate format {meta.get('version')!r}")
            n = int(meta["n"])
            x, z = strings_to_arrays((PauliString.from_label(s) for s in d["leaf_pauli"].tolist()), n)
            if d["leaf_pauli"].size == 0:
                x = z = np.zeros((0, max(1, (n + 63) // 64)), dtype=np.uint64)
            return cls(
                n,
                int(meta["n_params"]),
                int(meta["n_nodes"]),
                d["roots"],
                d["root_coeffs"],
                d["esrc"],
                d["edst"],
                d["ekind"],
                d["step_ptr"],
                d["step_param"],
                x,
                z,
                d["leaf_node"],
                d["leaf_freq"],
                {k: v for k, v in meta.items() if k not in ("version", "n", "n_params", "n_nodes")},
            )


# --------------------------------------------------------------------------- build


class _EdgeBuffer:
    def __init__(self, cap: int, budget: int):
        self.src = np.zeros(cap, dtype=np.int32)
        self.dst = np.zeros(cap, dtype=np.int32)
        self.kind = np.zeros(cap, dtype=np.int8)
        self.count = 0
        self.budget = budget

    def reserve(self, extra: int, n_nodes: int) -> None:
        need = self.count + extra
        if need > self.budget:
            raise SurrogateResourceError(
                f"surrogate build needs more than {self.budget} edges ({n_nodes} nodes so far)"
            )
        if need > self.src.size:
            cap = min(self.budget, max(need, 2 * self.src.size))
            for name in ("src", "dst", "kind"):
                old = getattr(self, name)
                new = np.zeros(cap, dtype=old.dtype)
                new[: self.count] = old[: self.count]
                setattr(self, name, new)

    @property
    def arrays(self):
        return self.src, self.dst, self.kind

    def trimmed(self):
        return self.src[: self.count].copy(), self.dst[: self.count].copy(), self.kind[: self.count].copy()


def surrogate_build(
    circuit: Circuit,
    O: PauliString | PauliSum,
    policy: TruncationPolicy | None = None,
    max_edges: int = DEFAULT_MAX_EDGES,
) -> SurrogateGraph:
    """Record the split/merge structure of propagating ``O`` through ``circuit``.

    ``policy.min_coeff`` is ignored (coefficients are symbolic here).  A weight
    cap keeps the graph polynomial in ``n``; without one the build is only
    feasible for small systems.
    """
    if isinstance(O, PauliString):
        O = PauliSum.from_string(O)
    policy = policy or TruncationPolicy(min_coeff=0.0)
    items, x, z = _initial(circuit, O, policy)
    m = len(items)
    roots = np.arange(m, dtype=np.int64)
    coeffs = np.array([c for _, c in items], dtype=np.float64)
    buf = _EdgeBuffer(1 << 16, max_edges)
    step_ptr = [0]
    step_param = []
    n_nodes = m
    gates = list(_gate_tuples(circuit))
    maxw, maxf, rule = policy.kcap, policy.lcap, policy.rule_code

    if use_dense(circuit.n, policy):
        n = circuit.n
        N = 1 << (2 * n)
        node = np.full(N, -1, dtype=np.int64)
        freq = np.zeros(N, dtype=np.int64)
        node[[p.x | (p.z << n) for p, _ in items]] = roots
        stepper = kd.DenseStepper(n)
        n_alive = m
        for gate, pid in reversed(gates):
            mx, mz = kd.gate_masks(*gate)
            buf.reserve(2 * n_alive, n_nodes)
            n_nodes, buf.count = stepper.symbolic(node, freq, mx, mz, maxw, maxf, rule, n_nodes, buf.arrays, buf.count)
            if buf.count > step_ptr[-1]:
                step_ptr.append(buf.count)
                step_param.append(pid)
                n_alive = int(np.count_nonzero(node >= 0))
        idx = np.flatnonzero(node >= 0)
        rows, lx, lz = _dense_output(n, idx)
        leaf_node, leaf_freq = node[rows], freq[rows]
        mode = "dense"
    else:
        store = TermStore(circuit.n, x, z, roots.copy())
        for gate, pid in reversed(gates):
            anti = kp.scan_anticommuting(store.X, store.Z, store.alive, store.count, gate)
            if anti.size == 0:
                continue
            store.prepare(anti.size)
            buf.reserve(3 * anti.size, n_nodes)
            store.count, n_nodes, buf.count = kp.apply_symbolic(
                store, anti, gate, maxw, maxf, rule, n_nodes, buf.arrays, buf.count
            )
            if buf.count > step_ptr[-1]:
                step_ptr.append(buf.count)
                step_param.append(pid)
        rows = _finish(store)
        lx, lz = store.X[rows].copy(), store.Z[rows].copy()
        leaf_node, leaf_freq = store.payload[rows].copy(), store.freq[rows].copy()
        mode = "sparse"

    if n_nodes >= 2**31:
        raise SurrogateResourceError(f"node count {n_nodes} exceeds the 32-bit edge index")
    esrc, edst, ekind = buf.trimmed()
    meta = {
        "max_weight": policy.max_weight,
        "max_frequency": policy.max_frequency,
        "freq_rule": policy.freq_rule,
        "observable": {p.label: c for p, c in items},
        "mode": mode,
    }
    return SurrogateGraph(
        circuit.n,
        circuit.n_params,
        int(n_nodes),
        roots,
        coeffs,
        esrc,
        edst,
        ekind,
        np.array(step_ptr, dtype=np.int64),
        np.array(step_param, dtype=np.int64),
        lx,
        lz,
        leaf_node.astype(np.int64),
        leaf_freq.astype(np.int64),
        meta,
    )


# --------------------------------------------------------------------------- evaluation


class SurrogateEvaluator:
    """Graph restricted to the edges that reach a chosen leaf subset.

    Nodes are renumbered densely so scratch arrays scale with the pruned graph.
    """

    def __init__(self, graph: SurrogateGraph, leaf_index: np.ndarray | None = None):
        self.graph = graph
        if leaf_index is None:
            leaf_index = np.arange(graph.n_leaves)
        self.leaf_index = np.asarray(leaf_index, dtype=np.int64)
        nodes = graph.leaf_node[self.leaf_index]
        keep = kg.needed_edges(graph.n_nodes, nodes, graph.step_ptr, graph.esrc, graph.edst)
        if keep.all():
            src, dst, kind = graph.esrc, graph.edst, graph.ekind
            ptr, par = graph.step_ptr, graph.step_param
            remap = None
            n_nodes = graph.n_nodes
        else:
            counts = np.add.reduceat(keep.astype(np.int64), graph.step_ptr[:-1]) if keep.size else np.zeros(0, np.int64)
            nonempty = counts > 0
            ptr = np.concatenate([[0], np.cumsum(counts[nonempty])])
            par = graph.step_param[nonempty]
            used = np.zeros(graph.n_nodes, dtype=bool)
            used[graph.roots] = True
            used[nodes] = True
            used[graph.esrc[keep]] = True
            used[graph.edst[keep]] = True
            remap = np.cumsum(used) - 1
            n_nodes = int(used.sum())
            src = remap[graph.esrc[keep]].astype(np.int32)
            dst = remap[graph.edst[keep]].astype(np.int32)
            kind = graph.ekind[keep]
        self.esrc, self.edst, self.ekind = src, dst, kind
        self.step_ptr = np.asarray(ptr, dtype=np.int64)
        self.step_param = np.asarray(par, dtype=np.int64)
        self.n_nodes = n_nodes
        self.roots = graph.roots if remap is None else remap[graph.roots]
        self.nodes = nodes if remap is None else remap[nodes]

    @property
    def n_edges(self) -> int:
        return int(self.esrc.size)

    def _theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64).ravel()
        if theta.size != self.graph.n_params:
            raise ValueError(f"expected {self.graph.n_params} parameters, got {theta.size}")
        return theta

    def coefficients(self, theta) -> np.ndarray:
        theta = self._theta(theta)
        f, _ = kg.step_factors(theta, self.step_param)
        val = kg.forward(self.n_nodes, self.roots, self.graph.root_coeffs, self.step_ptr, f, self.esrc, self.edst, self.ekind)
        return val[self.nodes]

    def coefficients_and_vjp(self, theta):
        """Leaf coefficients and a function mapping ``dL/dc`` to ``dL/dtheta``."""
        theta = self._theta(theta)
        f, df = kg.step_factors(theta, self.step_param)
        val = kg.forward(self.n_nodes, self.roots, self.graph.root_coeffs, self.step_ptr, f, self.esrc, self.edst, self.ekind)

        def vjp(dc: np.ndarray) -> np.ndarray:
            grad, _ = kg.backward(
                val,
                self.nodes,
                np.asarray(dc, dtype=np.float64),
                self.step_ptr,
                self.step_param,
                f,
                df,
                self.esrc,
                self.edst,
                self.ekind,
                self.graph.n_params,
            )
            return grad

        return val[self.nodes], vjp


@dataclass
class ActiveSet:
    """Selected leaves and how they were chosen."""

    indices: np.ndarray
    scores: np.ndarray | None = None
    window: int | None = None
    requested: int | None = None
    truncated_request: bool = False
    _evaluator: SurrogateEvaluator | None = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return int(self.indices.size)

    @classmethod
    def all(cls, graph: SurrogateGraph) -> "ActiveSet":
        return cls(np.arange(graph.n_leaves, dtype=np.int64))

    def labels(self, graph: SurrogateGraph) -> list[str]:
        lab = graph.leaf_labels()
        return [lab[i] for i in self.indices]

    def evaluator(self, graph: SurrogateGraph) -> SurrogateEvaluator:
        if self._evaluator is None or self._evaluator.graph is not graph:
            self._evaluator = SurrogateEvaluator(graph, self.indices)
        return self._evaluator


def within_window(labels: list[str], window: int | None) -> np.ndarray:
    """True where the non-identity sites fit inside ``window`` consecutive qubits."""
    out = np.ones(len(labels), dtype=bool)
    if window is None:
        return out
    for i, lab in enumerate(labels):
        sites = [q for q, ch in enumerate(lab) if ch != "I"]
        out[i] = not sites or sites[-1] - sites[0] < window
    return out


def select_active(graph: SurrogateGraph, features, M: int | None = None, window: int | None = None) -> ActiveSet:
    """Rank leaves by the across-dataset variance of their feature column and keep the top ``M``.

    Parameters
    ----------
    features
        A :class:`~pauliqcnn.shadows.FeatureTable` (or any object with ``ops``
        and a ``values`` matrix) covering every candidate leaf.
    window
        Optional width; leaves whose support does not fit in ``window``
        adjacent qubits are discarded first.

    Ties are broken by leaf order, so the selection is deterministic.
    """
    labels = graph.leaf_labels()
    col = {op: j for j, op in enumerate(features.ops)}
    cand = np.flatnonzero(within_window(labels, window))
    missing = [labels[i] for i in cand if labels[i] not in col]
    if missing:
        raise KeyError(f"feature table lacks {len(missing)} leaf operators, e.g. {missing[0]}")
    values = np.asarray(features.values, dtype=np.float64)
    var = np.array([values[:, col[labels[i]]].var() for i in cand]) if cand.size else np.zeros(0)
    order = np.lexsort((cand, -var))
    truncated = False
    if M is not None and M > cand.size:
        warnings.warn(f"requested {M} operators but only {cand.size} candidates exist", stacklevel=2)
        truncated = True
    take = order if M is None else order[:M]
    return ActiveSet(cand[take], var[take], window, M, truncated)


def _feature_vector(graph: SurrogateGraph, active: ActiveSet, feature_row) -> np.ndarray:
    if isinstance(feature_row, dict):
        labels = active.labels(graph)
        try:
            return np.array([feature_row[lab] for lab in labels], dtype=np.float64)
        except KeyError as exc:
            raise KeyError(f"missing feature for active leaf {exc.args[0]}") from None
    v = np.asarray(feature_row, dtype=np.float64)
    if v.shape != (len(active),):
        raise ValueError(f"feature row has shape {v.shape}, expected ({len(active)},)")
    return v


def surrogate_evaluate(graph: SurrogateGraph, active: ActiveSet | None, theta, feature_row) -> float:
    """``sum_b c_b(theta) * feature_b`` over the active leaves.

    ``feature_row`` is a ``{pauli label: value}`` mapping or an array aligned with ``active``.
    """
    active = active or ActiveSet.all(graph)
    fv = _feature_vector(graph, active, feature_row)
    return float(np.dot(active.evaluator(graph).coefficients(theta), fv))


def surrogate_gradient(graph: SurrogateGraph, active: ActiveSet | None, theta, feature_row) -> np.ndarray:
    """Exact gradient of :func:`surrogate_evaluate` with respect to ``theta``."""
    active = active or ActiveSet.all(graph)
    fv = _feature_vector(graph, active, feature_row)
    _, vjp = active.evaluator(graph).coefficients_and_vjp(theta)
    return vjp(fv)
