"""Heisenberg-picture Pauli propagation with weight/frequency/coefficient truncation.

Coefficients are those of the expansion of the evolved observable in Pauli
strings, so ``<O> = sum_a c_a <P_a>`` with ``<P_a>`` in ``[-1, 1]``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .circuits import Circuit
from .kernels import dense as kd
from .kernels import propagate as kp
from .kernels import statevec as ksv
from .kernels import use_numba
from .paulis import (
    PauliString,
    PauliSum,
    arrays_to_strings,
    n_words,
    strings_to_arrays,
    words_to_ints,
)

ORACLE_MAX_QUBITS = 14
_BIG = 1 << 40


class OracleSizeError(ValueError):
    """Raised when a dense computation is requested beyond the oracle limit."""


@dataclass(frozen=True)
class TruncationPolicy:
    """Propagation caps.  ``None`` means unbounded.

    Parameters
    ----------
    max_weight
        Largest Pauli weight ``k`` kept.
    max_frequency
        Largest number ``l`` of sine/cosine factors on a kept path.
    min_coeff
        Terms with ``|c| < min_coeff`` are dropped (numeric propagation only).
    freq_rule
        How the frequency of merged paths combines: ``"min"`` or ``"max"``.
    """

    max_weight: int | None = None
    max_frequency: int | None = None
    min_coeff: float = 1e-12
    freq_rule: str = "min"

    def __post_init__(self):
        for name in ("max_weight", "max_frequency"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.min_coeff < 0:
            raise ValueError("min_coeff must be non-negative")
        if self.freq_rule not in ("min", "max"):
            raise ValueError(f"unknown frequency rule {self.freq_rule!r}")

    @classmethod
    def exact(cls) -> "TruncationPolicy":
        return cls(None, None, 0.0)

    @property
    def kcap(self) -> int:
        return _BIG if self.max_weight is None else int(self.max_weight)

    @property
    def lcap(self) -> int:
        return _BIG if self.max_frequency is None else int(self.max_frequency)

    @property
    def rule_code(self) -> int:
        return kp.FREQ_MIN if self.freq_rule == "min" else kp.FREQ_MAX


@dataclass
class PropagatedOperator:
    """Truncated Heisenberg image held as parallel arrays in canonical key order."""

    n: int
    x: np.ndarray
    z: np.ndarray
    coeffs: np.ndarray
    freq: np.ndarray
    stats: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.coeffs.size

    @property
    def strings(self) -> list[PauliString]:
        return arrays_to_strings(self.x, self.z, self.n)

    @property
    def sum(self) -> PauliSum:
        out = PauliSum(self.n)
        for p, c in zip(self.strings, self.coeffs.tolist()):
            out.add_term(p, c)
        return out

    def weights(self) -> np.ndarray:
        m = self.x | self.z
        return np.array([sum(int(w).bit_count() for w in row) for row in m], dtype=np.int64)

    def squared_norm(self) -> float:
        return float(np.dot(self.coeffs, self.coeffs))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pauli", "coefficient", "frequency"])
            for p, c, f in zip(self.strings, self.coeffs.tolist(), self.freq.tolist()):
                w.writerow([p.label, repr(float(c)), int(f)])

    @classmethod
    def from_csv(cls, path) -> "PropagatedOperator":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        strings = [PauliString.from_label(r["pauli"]) for r in rows]
        n = strings[0].n if strings else 0
        x, z = strings_to_arrays(strings, n)
        return cls(
            n,
            x,
            z,
            np.array([float(r["coefficient"]) for r in rows]),
            np.array([int(r["frequency"]) for r in rows], dtype=np.int64),
        )


# --------------------------------------------------------------------------- store


class TermStore:
    """Growable row store shared by numeric and symbolic propagation."""

    def __init__(self, n: int, x: np.ndarray, z: np.ndarray, payload: np.ndarray):
        self.n = n
        m = x.shape[0]
        cap = max(64, 2 * m)
        W = n_words(n)
        self.X = np.zeros((cap, W), dtype=np.uint64)
        self.Z = np.zeros((cap, W), dtype=np.uint64)
        self.X[:m], self.Z[:m] = x, z
        self.wt = np.zeros(cap, dtype=np.int64)
        self.wt[:m] = [sum(int(v).bit_count() for v in row) for row in (x | z)]
        self.freq = np.zeros(cap, dtype=np.int64)
        self.alive = np.zeros(cap, dtype=bool)
        self.alive[:m] = True
        self.payload = np.zeros(cap, dtype=payload.dtype)
        self.payload[:m] = payload
        self.count = m
        self.dshift = n if n <= kp.DIRECT_MAX_QUBITS else -1
        self.table = np.full(1, -1, dtype=np.int64)
        self._rebuild()

    def _rebuild(self) -> None:
        if not use_numba():
            return
        if self.dshift >= 0:
            size = 1 << (2 * self.n)
        else:
            size = 1 << max(6, (2 * self.X.shape[0] - 1).bit_length())
        if self.table.size != size:
            self.table = np.empty(size, dtype=np.int64)
        kp.rebuild_table(self.X, self.Z, self.count, self.table, self.dshift)

    def _resize(self, cap: int) -> None:
        for name in ("X", "Z", "wt", "freq", "alive", "payload"):
            old = getattr(self, name)
            new = np.zeros((cap,) + old.shape[1:], dtype=old.dtype)
            new[: self.count] = old[: self.count]
            setattr(self, name, new)

    def prepare(self, extra: int) -> None:
        """Compact tombstones if they dominate, then make room for ``extra`` rows."""
        n_alive = int(self.alive[: self.count].sum())
        dead = self.count - n_alive
        changed = False
        if dead > max(4096, n_alive):
            keep = np.flatnonzero(self.alive[: self.count])
            for name in ("X", "Z", "wt", "freq", "alive", "payload"):
                arr = getattr(self, name)
                arr[: keep.size] = arr[keep]
            self.count = keep.size
            self.alive[self.count :] = False
            changed = True
        need = self.count + extra
        if need > self.X.shape[0]:
            self._resize(max(need, 2 * self.X.shape[0]))
            changed = True
        if changed:
            self._rebuild()

    def rows(self) -> np.ndarray:
        return np.flatnonzero(self.alive[: self.count])


def _gate_tuples(circuit: Circuit):
    ga = circuit.gate_arrays()
    for i in range(len(circuit)):
        yield (int(ga["nsite"][i]), ga["word"][i], ga["bit"][i], ga["gx"][i], ga["gz"][i]), int(ga["param"][i])


def _check_theta(circuit: Circuit, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64).ravel()
    if theta.size != circuit.n_params:
        raise ValueError(f"expected {circuit.n_params} parameters, got {theta.size}")
    return theta


def _initial(circuit: Circuit, O: PauliSum, policy: TruncationPolicy):
    if O.n != circuit.n:
        raise ValueError(f"observable acts on {O.n} qubits, circuit on {circuit.n}")
    items = [(p, c) for p, c in O.items() if p.weight() <= policy.kcap]
    x, z = strings_to_arrays((p for p, _ in items), O.n)
    return items, x, z


def _finish(store: TermStore) -> np.ndarray:
    """Alive rows in canonical (x, z) order, most significant word last in the key."""
    r = store.rows()
    order = np.lexsort(tuple(store.Z[r].T) + tuple(store.X[r].T))
    return r[order]


def reachable_strings(n: int, max_weight: int | None) -> int:
    """Number of Pauli strings of weight at most ``max_weight``."""
    k = n if max_weight is None else min(n, max_weight)
    return sum(math.comb(n, w) * 3**w for w in range(k + 1))


def use_dense(n: int, policy: TruncationPolicy) -> bool:
    """Dense index space when it is small and the weight cap leaves most of it reachable."""
    return n <= kd.DENSE_MAX_QUBITS and 8 * reachable_strings(n, policy.max_weight) >= 4**n


def _dense_init(n, items):
    N = 1 << (2 * n)
    idx = np.array([p.x | (p.z << n) for p, _ in items], dtype=np.int64)
    freq = np.zeros(N, dtype=np.int64)
    return N, idx, freq


def _dense_output(n, alive_idx):
    full = (1 << n) - 1
    x, z = alive_idx & full, alive_idx >> n
    order = np.lexsort((z, x))
    return alive_idx[order], x[order].astype(np.uint64)[:, None], z[order].astype(np.uint64)[:, None]


def _propagate_dense(circuit, items, theta, policy):
    n = circuit.n
    N, idx, freq = _dense_init(n, items)
    val = np.zeros(N)
    alive = np.zeros(N, dtype=bool)
    val[idx] = [c for _, c in items]
    alive[idx] = True
    stepper = kd.DenseStepper(n)
    for gate, pid in reversed(list(_gate_tuples(circuit))):
        mx, mz = kd.gate_masks(*gate)
        t = theta[pid]
        stepper.numeric(val, freq, alive, mx, mz, math.cos(t), math.sin(t), policy.kcap, policy.lcap, policy.rule_code, policy.min_coeff)
    rows, x, z = _dense_output(n, np.flatnonzero(alive))
    return PropagatedOperator(n, x, z, val[rows], freq[rows], {"terms": int(rows.size), "mode": "dense"})


def propagate(circuit: Circuit, O: PauliSum | PauliString, theta, policy: TruncationPolicy | None = None) -> PropagatedOperator:
    """Evolve ``O`` backwards through ``circuit`` at parameters ``theta``.

    Gates are applied in reverse order; identical strings merge after every gate.
    Small systems with a loose weight cap run over the full index space.
    """
    if isinstance(O, PauliString):
        O = PauliSum.from_string(O)
    policy = policy or TruncationPolicy()
    theta = _check_theta(circuit, theta)
    items, x, z = _initial(circuit, O, policy)
    if use_dense(circuit.n, policy):
        return _propagate_dense(circuit, items, theta, policy)
    store = TermStore(circuit.n, x, z, np.array([c for _, c in items], dtype=np.float64))
    gates = list(_gate_tuples(circuit))
    peak = store.count
    for gate, pid in reversed(gates):
        anti = kp.scan_anticommuting(store.X, store.Z, store.alive, store.count, gate)
        if anti.size == 0:
            continue
        store.prepare(anti.size)
        t = theta[pid]
        store.count = kp.apply_numeric(
            store, anti, gate, math.cos(t), math.sin(t), policy.kcap, policy.lcap, policy.rule_code, policy.min_coeff
        )
        peak = max(peak, store.count)
    rows = _finish(store)
    return PropagatedOperator(
        circuit.n,
        store.X[rows].copy(),
        store.Z[rows].copy(),
        store.payload[rows].copy(),
        store.freq[rows].copy(),
        {"terms": int(rows.size), "peak_rows": int(peak), "mode": "sparse"},
    )


def apply_rotation_heisenberg(term, gate, theta: float, policy: TruncationPolicy | None = None):
    """Single-term reference rule.

    Parameters
    ----------
    term
        ``(PauliString, coeff, frequency)``.
    gate
        A :class:`~pauliqcnn.circuits.Gate` or its generator.

    Returns
    -------
    list of ``(PauliString, coeff, frequency)`` with at most two entries.
    """
    from .paulis import commutes, multiply

    policy = policy or TruncationPolicy.exact()
    P, c, ell = term
    G = getattr(gate, "generator", gate)
    if commutes(G, P):
        return [(P, c, ell)]
    phase, Q = multiply(G, P)
    sign = (-1j * phase).real
    out = []
    if ell + 1 <= policy.lcap:
        a = c * math.cos(theta)
        if abs(a) >= policy.min_coeff:
            out.append((P, a, ell + 1))
        b = sign * c * math.sin(theta)
        if Q.weight() <= policy.kcap and abs(b) >= policy.min_coeff:
            out.append((Q, b, ell + 1))
    return out


# --------------------------------------------------------------------------- oracles


def _check_oracle(n: int) -> None:
    if n > ORACLE_MAX_QUBITS:
        raise OracleSizeError(f"dense oracle limited to {ORACLE_MAX_QUBITS} qubits, got {n}")


def statevector_oracle(circuit: Circuit, theta, sv) -> np.ndarray:
    """Schrodinger evolution of ``sv`` through ``circuit`` (gate k is ``exp(i t G / 2)``)."""
    _check_oracle(circuit.n)
    theta = _check_theta(circuit, theta)
    psi = np.asarray(sv, dtype=np.complex128).copy()
    if psi.size != 1 << circuit.n:
        raise ValueError("statevector size does not match the circuit")
    for g in circuit.gates:
        t = theta[g.param_id]
        psi = math.cos(t / 2) * psi + 1j * math.sin(t / 2) * ksv.apply_pauli(psi, g.generator.x, g.generator.z)
    return psi


def exact_expectation(sv, P: PauliString | PauliSum) -> float:
    sv = np.asarray(sv, dtype=np.complex128)
    n = int(sv.size).bit_length() - 1
    _check_oracle(n)
    if isinstance(P, PauliString):
        P = PauliSum.from_string(P)
    items = P.items()
    xs = np.array([p.x for p, _ in items], dtype=np.int64)
    zs = np.array([p.z for p, _ in items], dtype=np.int64)
    vals = ksv.pauli_expectations(sv, xs, zs)
    return float(np.dot([c for _, c in items], vals))


def expectation_from_state(op: PropagatedOperator, sv) -> float:
    """``sum_a c_a <sv|P_a|sv>`` over the terms of ``op``."""
    _check_oracle(op.n)
    sv = np.asarray(sv, dtype=np.complex128)
    if sv.size != 1 << op.n:
        raise ValueError("statevector size does not match the operator")
    xs = np.array(words_to_ints(op.x), dtype=np.int64) if len(op) else np.zeros(0, np.int64)
    zs = np.array(words_to_ints(op.z), dtype=np.int64) if len(op) else np.zeros(0, np.int64)
    return float(np.dot(op.coeffs, ksv.pauli_expectations(sv, xs, zs)))


def basis_state(n: int, bits: str | int) -> np.ndarray:
    """Computational basis state; ``bits`` as text lists qubit 1 first."""
    idx = bits if isinstance(bits, int) else sum(int(b) << q for q, b in enumerate(bits))
    psi = np.zeros(1 << n, dtype=np.complex128)
    psi[idx] = 1.0
    return psi


def random_bloch(n: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def product_state(bloch: np.ndarray) -> np.ndarray:
    """Statevector of a pure product state with per-qubit Bloch vectors (rows x,y,z)."""
    _check_oracle(len(bloch))
    psi = np.ones(1, dtype=np.complex128)
    for rx, ry, rz in bloch:
        th = math.acos(max(-1.0, min(1.0, rz)))
        ph = math.atan2(ry, rx)
        q = np.array([math.cos(th / 2), np.exp(1j * ph) * math.sin(th / 2)])
        # qubit q is bit q, so later qubits are more significant
        psi = np.kron(q, psi)
    return psi


def product_values(x: np.ndarray, z: np.ndarray, n: int, bloch: np.ndarray) -> np.ndarray:
    """``<P>`` of every Pauli word ``(x, z)`` on the product state with Bloch vectors ``bloch``."""
    bloch = np.asarray(bloch, dtype=np.float64)
    # index x_bit + 2 z_bit: I, X, Z, Y
    table = np.stack([np.ones(len(bloch)), bloch[:, 0], bloch[:, 2], bloch[:, 1]], axis=1)
    vals = np.ones(x.shape[0])
    for q in range(n):
        w, b = divmod(q, 64)
        code = ((x[:, w] >> np.uint64(b)) & np.uint64(1)) | (((z[:, w] >> np.uint64(b)) & np.uint64(1)) << np.uint64(1))
        vals *= table[q][code.astype(np.intp)]
    return vals


def product_expectation(op: PropagatedOperator, bloch: np.ndarray) -> float:
    """Expectation on a product state without building the statevector."""
    if len(op) == 0:
        return 0.0
    return float(np.dot(op.coeffs, product_values(op.x, op.z, op.n, bloch)))
