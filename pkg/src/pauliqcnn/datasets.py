"""Spin-chain Hamiltonians, ground states by exact diagonalization, phase labels and dataset files.

Models (qubits are 0-based here; the bond/site index ``i`` in the comments is 1-based):

* ``XXX``: ``sum_{i=1}^{n-1} J_i (XX + YY + ZZ)_{i,i+1}`` with ``J_i = J1`` for even
  ``i`` and ``J2`` for odd ``i`` (the first bond carries ``J2``);
* ``Haldane``: ``-J sum Z_i X_{i+1} Z_{i+2} - h1 sum X_i - h2 sum X_i X_{i+1}``;
* ``ANNNI``: ``-J1 sum X_i X_{i+1} - J2 sum X_i X_{i+2} - B sum Z_i``;
* ``Cluster``: ``sum_i (Z_i - J1 X_i X_{i+1} - J2 X_{i-1} Z_i X_{i+1})`` on a ring.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .paulis import PauliString, PauliSum
from .shadows import ShadowSet, sample_shadows

MODELS = ("XXX", "Haldane", "ANNNI", "Cluster")
PARAMS = {
    "XXX": ("J1", "J2"),
    "Haldane": ("J", "h1", "h2"),
    "ANNNI": ("J1", "J2", "B"),
    "Cluster": ("J1", "J2"),
}
DENSE_MAX_QUBITS = 10
ITERATIVE_MAX_QUBITS = 20
HALDANE_H2_CRITICAL = 0.423
DEGENERACY_TOL = 1e-8
SV_MAGIC = b"PQSV"
SV_VERSION = 1


class LabelError(ValueError):
    """Raised when no built-in labelling rule covers the requested parameters."""


@dataclass(frozen=True)
class HamiltonianSpec:
    model: str
    params: dict
    n: int

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; choose from {MODELS}")
        missing = set(PARAMS[self.model]) - set(self.params)
        extra = set(self.params) - set(PARAMS[self.model])
        if missing or extra:
            raise ValueError(f"{self.model} takes parameters {PARAMS[self.model]}")
        object.__setattr__(self, "params", {k: float(self.params[k]) for k in PARAMS[self.model]})

    @property
    def boundary(self) -> str:
        return "closed" if self.model == "Cluster" else "open"

    def __hash__(self):
        return hash((self.model, tuple(self.params.items()), self.n))


@dataclass
class LabeledState:
    spec: HamiltonianSpec
    state_id: int
    label: int
    energy: float
    gap: float
    statevector: np.ndarray | None = None
    label_flags: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)


# --------------------------------------------------------------------------- Hamiltonians


def hamiltonian_terms(spec: HamiltonianSpec) -> PauliSum:
    """Physics-convention Pauli expansion of the model Hamiltonian."""
    n, p = spec.n, spec.params
    min_n = {"XXX": 2, "Haldane": 3, "ANNNI": 2, "Cluster": 3}[spec.model]
    if n < min_n:
        raise ValueError(f"{spec.model} needs at least {min_n} qubits")
    H = PauliSum(n)

    def add(coeff: float, sites: dict[int, str]) -> None:
        if coeff != 0.0:
            H.add_term(PauliString.single(n, sites), coeff)

    if spec.model == "XXX":
        for i in range(1, n):
            J = p["J1"] if i % 2 == 0 else p["J2"]
            for ax in "XYZ":
                add(J, {i - 1: ax, i: ax})
    elif spec.model == "Haldane":
        for i in range(n - 2):
            add(-p["J"], {i: "Z", i + 1: "X", i + 2: "Z"})
        for i in range(n):
            add(-p["h1"], {i: "X"})
        for i in range(n - 1):
            add(-p["h2"], {i: "X", i + 1: "X"})
    elif spec.model == "ANNNI":
        for i in range(n - 1):
            add(-p["J1"], {i: "X", i + 1: "X"})
        for i in range(n - 2):
            add(-p["J2"], {i: "X", i + 2: "X"})
        for i in range(n):
            add(-p["B"], {i: "Z"})
    else:
        for i in range(n):
            add(1.0, {i: "Z"})
            add(-p["J1"], {i: "X", (i + 1) % n: "X"})
            add(-p["J2"], {(i - 1) % n: "X", i: "Z", (i + 1) % n: "X"})
    return H


def _grouped_diagonals(H: PauliSum):
    """Group terms by X mask: ``H = sum_x D_x F_x`` with bit-flip ``F_x`` and diagonal ``D_x``."""
    n = H.n
    idx = np.arange(1 << n, dtype=np.int64)
    groups: dict[int, np.ndarray] = {}
    for p, c in H.items():
        phase = (1j) ** (bin(p.x & p.z).count("1") % 4)
        sign = 1 - 2 * (np.bitwise_count(idx & p.z) & 1).astype(np.float64)
        # <b ^ x| P |b> = phase * (-1)**|b & z|, stored against the source index b
        d = c * phase * sign
        groups[p.x] = groups.get(p.x, 0) + d
    out = []
    for x, d in sorted(groups.items()):
        d = np.asarray(d)
        if np.allclose(d.imag, 0.0):
            d = d.real.copy()
        out.append((x, d))
    return out


def hamiltonian_operator(H: PauliSum):
    """Matrix-free ``scipy`` linear operator for ``H``."""
    n = H.n
    dim = 1 << n
    groups = _grouped_diagonals(H)
    idx = np.arange(dim, dtype=np.int64)
    real = all(np.isrealobj(d) for _, d in groups)
    perms = [(idx ^ x, d) for x, d in groups]

    def matvec(v):
        v = np.asarray(v).reshape(-1)
        out = np.zeros(dim, dtype=np.float64 if real and np.isrealobj(v) else np.complex128)
        for perm, d in perms:
            out[perm] += d * v
        return out

    dtype = np.float64 if real else np.complex128
    return scipy.sparse.linalg.LinearOperator((dim, dim), matvec=matvec, dtype=dtype)


def hamiltonian_matrix(H: PauliSum) -> np.ndarray:
    dim = 1 << H.n
    groups = _grouped_diagonals(H)
    real = all(np.isrealobj(d) for _, d in groups)
    M = np.zeros((dim, dim), dtype=np.float64 if real else np.complex128)
    idx = np.arange(dim)
    for x, d in groups:
        M[idx ^ x, idx] += d
    return M


def _fix_phase(v: np.ndarray) -> np.ndarray:
    j = int(np.argmax(np.abs(v) > np.abs(v).max() * (1 - 1e-9)))
    v = v * (abs(v[j]) / v[j])
    return v / np.linalg.norm(v)


def ground_state(spec: HamiltonianSpec, H: PauliSum | None = None):
    """Lowest eigenpair of the model Hamiltonian.

    Returns ``(statevector, energy, gap)``; ``gap`` is the distance to the
    second eigenvalue (small gaps flag a degenerate ground space).  Dense
    diagonalization up to 10 qubits, Lanczos with a fixed start vector beyond.
    The global phase is fixed so the first largest-magnitude amplitude is real
    and positive.
    """
    n = spec.n
    if n > ITERATIVE_MAX_QUBITS:
        raise ValueError(f"exact diagonalization limited to {ITERATIVE_MAX_QUBITS} qubits")
    H = hamiltonian_terms(spec) if H is None else H
    if n <= DENSE_MAX_QUBITS:
        w, v = scipy.linalg.eigh(hamiltonian_matrix(H), subset_by_index=[0, 1])
        e0, e1, psi = float(w[0]), float(w[1]), v[:, 0]
    else:
        op = hamiltonian_operator(H)
        v0 = np.random.default_rng(20240229).standard_normal(op.shape[0]).astype(op.dtype)
        w, v = scipy.sparse.linalg.eigsh(op, k=2, which="SA", v0=v0, tol=1e-12, maxiter=20000)
        order = np.argsort(w)
        e0, e1, psi = float(w[order[0]]), float(w[order[1]]), v[:, order[0]]
    psi = _fix_phase(np.asarray(psi, dtype=np.complex128))
    return psi, e0, e1 - e0


def energy_and_residual(H: PauliSum, psi: np.ndarray) -> tuple[float, float]:
    hv = hamiltonian_operator(H).matvec(psi.astype(np.complex128))
    e = float(np.vdot(psi, hv).real)
    return e, float(np.linalg.norm(hv - e * psi))


# --------------------------------------------------------------------------- labels

ANNNI_PHASES = ("ferromagnetic", "paramagnetic", "floating", "antiphase")
CLUSTER_PHASES = ("trivial", "ferromagnetic", "antiferromagnetic", "SPT")
LABEL_NAMES = {
    "XXX": ("trivial", "topological"),
    "Haldane": ("paramagnetic", "SPT"),
    "ANNNI": ANNNI_PHASES,
    "Cluster": CLUSTER_PHASES,
}


def annni_boundaries(kappa: float) -> dict[str, float]:
    """Approximate critical fields of the ANNNI model at ``kappa = -J2/J1``.

    Ising line for ``kappa < 1/2``, Kosterlitz-Thouless and commensurate-
    incommensurate lines for ``kappa > 1/2``; thermodynamic-limit fits, not exact.
    """
    out = {}
    if 0 < kappa < 0.5:
        out["ising"] = (1 - kappa) / kappa * (1 - math.sqrt((1 - 3 * kappa + 4 * kappa * kappa) / (1 - kappa)))
    elif kappa <= 0:
        out["ising"] = 1.0 if kappa == 0 else math.nan
    if kappa > 0.5:
        out["kt"] = 1.05 * math.sqrt((kappa - 0.5) * (kappa - 0.1))
        out["ci"] = 1.05 * (kappa - 0.5)
    return out


def cluster_winding(J1: float, J2: float) -> tuple[int, float]:
    """Zeros of ``1 - J1 z - J2 z**2`` inside the unit disk (free-fermion winding) and the inner root's sign."""
    roots = np.roots([-J2, -J1, 1.0]) if J2 != 0 else (np.array([1.0 / J1]) if J1 != 0 else np.zeros(0))
    inside = [r for r in np.atleast_1d(roots) if abs(r) < 1.0]
    sign = float(np.sign(inside[0].real)) if len(inside) == 1 else 0.0
    return len(inside), sign


def assign_label(spec: HamiltonianSpec) -> int:
    """Built-in phase id; see :func:`label_flags` for how reliable it is."""
    return _label(spec)[0]


def label_flags(spec: HamiltonianSpec) -> tuple[str, ...]:
    return _label(spec)[1]


def _label(spec: HamiltonianSpec) -> tuple[int, tuple[str, ...]]:
    p = spec.params
    if spec.model == "XXX":
        if p["J1"] < 0 or p["J2"] < 0:
            raise LabelError("XXX labels need non-negative couplings")
        flags = ("boundary",) if p["J1"] == p["J2"] else ()
        return (0 if p["J2"] < p["J1"] else 1), flags
    if spec.model == "Haldane":
        if p["J"] != 1.0 or p["h1"] != 0.5:
            raise LabelError("Haldane labels are defined on the line J=1, h1=0.5")
        flags = ("boundary",) if p["h2"] == HALDANE_H2_CRITICAL else ()
        return (0 if p["h2"] < HALDANE_H2_CRITICAL else 1), flags
    if spec.model == "ANNNI":
        if p["J1"] <= 0 or p["B"] < 0:
            raise LabelError("ANNNI labels need J1 > 0 and B >= 0")
        kappa, h = -p["J2"] / p["J1"], p["B"] / p["J1"]
        if kappa < 0:
            raise LabelError("ANNNI labels cover kappa >= 0")
        b = annni_boundaries(kappa)
        if kappa <= 0.5:
            hc = b.get("ising", 0.0) if kappa < 0.5 else 0.0
            return (0 if h < hc else 1), ("approximate",)
        if h < b["ci"]:
            return 3, ("approximate",)
        return (2 if h < b["kt"] else 1), ("approximate",)
    c, sign = cluster_winding(p["J1"], p["J2"])
    flags = ("thermodynamic-limit",)
    if c == 0:
        return 0, flags
    if c == 1:
        return (1 if sign > 0 else 2), flags
    return 3, flags


# --------------------------------------------------------------------------- grids


def line_grid(model: str, n: int, vary: str, start: float, stop: float, count: int, fixed: dict) -> list[HamiltonianSpec]:
    """Evenly spaced points along one parameter with the others fixed."""
    return [
        HamiltonianSpec(model, {**fixed, vary: float(v)}, n) for v in np.linspace(start, stop, count)
    ]


def balanced_box_grid(
    model: str, n: int, ranges: dict, per_class: int, seed: int, fixed: dict | None = None, max_draws: int = 1_000_000
) -> list[HamiltonianSpec]:
    """Uniform random points in a parameter box, accepted until every phase has ``per_class`` points.

    Points are ordered by class, then by draw order.
    """
    rng = np.random.default_rng(seed)
    names = sorted(ranges)
    buckets: dict[int, list[HamiltonianSpec]] = {}
    n_classes = len(LABEL_NAMES[model])
    for _ in range(max_draws):
        vals = {k: float(rng.uniform(*ranges[k])) for k in names}
        spec = HamiltonianSpec(model, {**(fixed or {}), **vals}, n)
        lab = assign_label(spec)
        bucket = buckets.setdefault(lab, [])
        if len(bucket) < per_class:
            bucket.append(spec)
        if len(buckets) == n_classes and all(len(b) == per_class for b in buckets.values()):
            return [s for lab in sorted(buckets) for s in buckets[lab]]
    raise ValueError("parameter box does not cover every phase; widen the ranges")


# --------------------------------------------------------------------------- persistence


def write_statevector(path, psi: np.ndarray, state_id: int) -> None:
    """Little-endian header (magic, version, n, state_id) followed by 2**n (re, im) float64 pairs."""
    psi = np.asarray(psi, dtype="<c16")
    n = int(psi.size).bit_length() - 1
    with open(path, "wb") as fh:
        fh.write(SV_MAGIC + struct.pack("<IIq", SV_VERSION, n, state_id))
        fh.write(psi.tobytes())


def read_statevector(path) -> tuple[np.ndarray, int]:
    data = Path(path).read_bytes()
    if data[:4] != SV_MAGIC:
        raise ValueError("not a statevector cache file")
    version, n, state_id = struct.unpack("<IIq", data[4:20])
    if version != SV_VERSION:
        raise ValueError(f"unsupported statevector version {version}")
    psi = np.frombuffer(data[20:], dtype="<c16")
    if psi.size != 1 << n:
        raise ValueError("statevector cache is truncated")
    return psi.astype(np.complex128), state_id


def state_seed(master_seed: int, stream: str, state_id: int) -> int:
    """Per-state u64 seed derived from the master seed and a named stream."""
    key = int.from_bytes(stream.encode(), "little")
    ss = np.random.SeedSequence(master_seed, spawn_key=(key, state_id))
    return int(ss.generate_state(1, np.uint64)[0])


MANIFEST_BASE = ["state_id", "model", "n", "boundary"]
MANIFEST_TAIL = ["label", "label_flags", "energy", "gap", "residual", "bond_convention", "shadow_seed", "shadow_file", "statevector_file"]


def generate_dataset(
    specs: Sequence[HamiltonianSpec],
    shots: int,
    seed: int,
    out_dir,
    save_states: bool = False,
    labels: Sequence[int] | None = None,
) -> list[LabeledState]:
    """Ground state, label and shadow file for every grid point, plus ``manifest.csv``.

    ``labels`` overrides the built-in rule (external labels are authoritative).
    With ``shots == 0`` no shadow files are written; pass ``save_states`` to
    keep the statevector cache for exact-mode features.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if shots:
        (out / "shadows").mkdir(exist_ok=True)
    if save_states:
        (out / "states").mkdir(exist_ok=True)
    models = {s.model for s in specs}
    if len(models) != 1:
        raise ValueError("a dataset holds a single model")
    model = models.pop()
    if labels is not None and len(labels) != len(specs):
        raise ValueError("one external label per grid point is required")
    rows, states = [], []
    for sid, spec in enumerate(specs):
        H = hamiltonian_terms(spec)
        psi, energy, gap = ground_state(spec, H)
        _, residual = energy_and_residual(H, psi)
        if labels is None:
            lab, flags = _label(spec)
        else:
            lab, flags = int(labels[sid]), ("external",)
        if gap < DEGENERACY_TOL:
            flags = flags + ("degenerate",)
        shadow_file = sv_file = ""
        sseed = state_seed(seed, "shadows", sid) if shots else 0
        if shots:
            shadow_file = f"shadows/state_{sid:05d}.txt"
            sample_shadows(psi, shots, sseed, sid, lab).save(out / shadow_file)
        if save_states:
            sv_file = f"states/state_{sid:05d}.bin"
            write_statevector(out / sv_file, psi, sid)
        rows.append(
            [sid, model, spec.n, spec.boundary]
            + [repr(spec.params[k]) for k in PARAMS[model]]
            + [lab, ";".join(flags), repr(energy), repr(gap), repr(residual),
               "bond1=J2" if model == "XXX" else "", sseed, shadow_file, sv_file]
        )
        states.append(LabeledState(spec, sid, lab, energy, gap, psi, flags))
    with open(out / "manifest.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MANIFEST_BASE + list(PARAMS[model]) + MANIFEST_TAIL)
        w.writerows(rows)
    return states


@dataclass
class DatasetEntry:
    state_id: int
    spec: HamiltonianSpec
    label: int
    energy: float
    gap: float
    shadow_file: str
    statevector_file: str


def read_manifest(path) -> list[DatasetEntry]:
    path = Path(path)
    entries = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            model = row["model"]
            spec = HamiltonianSpec(model, {k: float(row[k]) for k in PARAMS[model]}, int(row["n"]))
            entries.append(
                DatasetEntry(
                    int(row["state_id"]), spec, int(row["label"]), float(row["energy"]), float(row["gap"]),
                    row["shadow_file"], row["statevector_file"],
                )
            )
    return entries


def load_shadow_sets(manifest_path) -> list[ShadowSet]:
    root = Path(manifest_path).parent
    sets = []
    for e in read_manifest(manifest_path):
        if not e.shadow_file:
            raise ValueError(f"state {e.state_id} has no shadow file")
        sets.append(ShadowSet.load(root / e.shadow_file))
    return sets


def load_states(manifest_path) -> list[tuple[int, int, np.ndarray]]:
    root = Path(manifest_path).parent
    out = []
    for e in read_manifest(manifest_path):
        if not e.statevector_file:
            raise ValueError(f"state {e.state_id} has no statevector cache")
        psi, _ = read_statevector(root / e.statevector_file)
        out.append((e.state_id, e.label, psi))
    return out
