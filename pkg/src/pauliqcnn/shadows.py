"""Local Pauli classical shadows: acquisition, estimation, feature tables and file formats.

A record measures every qubit in a uniformly random X/Y/Z basis.  The
single-shot estimate of a Pauli ``P`` is ``prod_{q in supp P} 3 (-1)**b_q``
when every support qubit was measured in ``P``'s letter, else 0; its mean is
unbiased for ``<P>`` (physics convention, values in [-1, 1]).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .kernels import shadows as ksh
from .paulis import PauliString

ACQUISITION_MAX_QUBITS = 20
_LETTERS = "IXYZ"
_CODE = {ch: i for i, ch in enumerate(_LETTERS)}


@dataclass(frozen=True)
class ShadowRecord:
    """One snapshot: measured basis per qubit and outcome bits (bit b means eigenvalue (-1)**b)."""

    basis: str
    outcomes: str

    def __post_init__(self):
        if len(self.basis) != len(self.outcomes):
            raise ValueError("basis and outcome lengths differ")
        if set(self.basis) - set("XYZ") or set(self.outcomes) - set("01"):
            raise ValueError("invalid shadow record")


@dataclass
class ShadowSet:
    """Measurement records of one state, stored as ``(S, n)`` code and bit arrays."""

    n: int
    state_id: int
    label: int
    bases: np.ndarray
    bits: np.ndarray
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.bases = np.asarray(self.bases, dtype=np.uint8).reshape(-1, self.n)
        self.bits = np.asarray(self.bits, dtype=np.uint8).reshape(-1, self.n)
        if self.bases.shape != self.bits.shape:
            raise ValueError("basis and outcome arrays differ in shape")

    def __len__(self) -> int:
        return int(self.bases.shape[0])

    @property
    def records(self) -> list[ShadowRecord]:
        return [
            ShadowRecord("".join(_LETTERS[c] for c in b), "".join(str(int(v)) for v in o))
            for b, o in zip(self.bases, self.bits)
        ]

    @classmethod
    def from_records(cls, records: Sequence[ShadowRecord], state_id: int = 0, label: int = -1, seed: int = 0):
        if not records:
            raise ValueError("no records")
        n = len(records[0].basis)
        if any(len(r.basis) != n for r in records):
            raise ValueError("records act on different qubit counts")
        bases = np.array([[_CODE[c] for c in r.basis] for r in records], dtype=np.uint8)
        bits = np.array([[int(c) for c in r.outcomes] for r in records], dtype=np.uint8)
        return cls(n, state_id, label, bases, bits, seed)

    # ----------------------------------------------------------------- file format

    def to_text(self) -> str:
        lines = [f"n={self.n} state={self.state_id} label={self.label} shots={len(self)} seed={self.seed}"]
        table = np.frombuffer(b"IXYZ", dtype=np.uint8)
        for b, o in zip(self.bases, self.bits):
            lines.append(table[b].tobytes().decode() + " " + (o + ord("0")).astype(np.uint8).tobytes().decode())
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ShadowSet":
        lines = text.splitlines()
        if not lines:
            raise ValueError("empty shadow file")
        head = dict(tok.split("=", 1) for tok in lines[0].split())
        try:
            n, state, label, shots, seed = (int(head[k]) for k in ("n", "state", "label", "shots", "seed"))
        except KeyError as exc:
            raise ValueError(f"shadow header lacks {exc.args[0]!r}") from None
        body = [ln.split() for ln in lines[1:] if ln.strip()]
        if len(body) != shots:
            raise ValueError(f"header announces {shots} shots but {len(body)} records follow")
        if any(len(parts) != 2 or len(parts[0]) != n or len(parts[1]) != n for parts in body):
            raise ValueError("malformed shadow record")
        lut = np.full(256, 255, dtype=np.uint8)
        for ch, code in (("X", 1), ("Y", 2), ("Z", 3)):
            lut[ord(ch)] = code
        raw_b = np.frombuffer("".join(p[0] for p in body).encode(), dtype=np.uint8)
        raw_o = np.frombuffer("".join(p[1] for p in body).encode(), dtype=np.uint8)
        bases = lut[raw_b]
        bits = raw_o - ord("0")
        if np.any(bases == 255) or np.any(bits > 1):
            raise ValueError("invalid basis letter or outcome bit")
        return cls(n, state, label, bases.reshape(shots, n), bits.reshape(shots, n), seed)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "ShadowSet":
        return cls.from_text(Path(path).read_text())


def sample_shadows(sv, S: int, seed: int, state_id: int = 0, label: int = -1) -> ShadowSet:
    """Simulate ``S`` random-Pauli measurement records of the statevector ``sv``.

    Bases and the uniforms driving outcomes come from ``numpy.random.default_rng(seed)``,
    so a fixed seed gives a bit-identical set.
    """
    sv = np.asarray(sv, dtype=np.complex128)
    n = int(sv.size).bit_length() - 1
    if sv.size != 1 << n:
        raise ValueError("statevector length is not a power of two")
    if n > ACQUISITION_MAX_QUBITS:
        raise ValueError(f"simulated acquisition limited to {ACQUISITION_MAX_QUBITS} qubits; import shadows instead")
    if S < 0:
        raise ValueError("shot count must be non-negative")
    rng = np.random.default_rng(seed)
    bases = rng.integers(1, 4, size=(S, n), dtype=np.uint8)
    uniforms = rng.random((S, n))
    bits = ksh.sample_measurements(sv, bases, uniforms)
    return ShadowSet(n, state_id, label, bases, bits, seed)


# --------------------------------------------------------------------------- estimation


def _as_strings(ops: Iterable[PauliString | str]) -> list[PauliString]:
    return [PauliString.from_label(p) if isinstance(p, str) else p for p in ops]


def _op_tables(ops: list[PauliString]):
    kmax = max((p.weight() for p in ops), default=0)
    sites = np.zeros((len(ops), max(kmax, 1)), dtype=np.int64)
    letters = np.zeros_like(sites, dtype=np.uint8)
    weights = np.zeros(len(ops), dtype=np.int64)
    for i, p in enumerate(ops):
        if p.weight() == 0:
            raise ValueError("the identity has no shadow estimator; its expectation is 1")
        supp = p.support()
        weights[i] = len(supp)
        sites[i, : len(supp)] = supp
        letters[i, : len(supp)] = [_CODE[p.letter(q)] for q in supp]
    return sites, letters, weights


def _estimates(shadow: ShadowSet, tables, groups: int | None) -> np.ndarray:
    S = len(shadow)
    if S == 0:
        raise ValueError(f"shadow set of state {shadow.state_id} has no records")
    g = 1 if groups is None else int(groups)
    if not 1 <= g <= S:
        raise ValueError(f"group count must lie in [1, {S}]")
    means = ksh.estimate_groups(shadow.bases, shadow.bits, *tables, ksh.group_bounds(S, g))
    return means[:, 0] if g == 1 else np.median(means, axis=1)


def estimate(shadow: ShadowSet, P: PauliString | str, groups: int | None = None) -> float:
    """Shadow estimate of ``<P>``: the empirical mean, or median of ``groups`` group means."""
    (p,) = _as_strings([P])
    if p.n != shadow.n:
        raise ValueError("operator and shadow set act on different qubit counts")
    return float(_estimates(shadow, _op_tables([p]), groups)[0])


@dataclass
class FeatureTable:
    """Per-state feature rows: ``values[i, j]`` estimates ``<ops[j]>`` on state ``state_ids[i]``."""

    ops: list[str]
    state_ids: np.ndarray
    labels: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.state_ids = np.asarray(self.state_ids, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64).reshape(len(self.state_ids), len(self.ops))
        if self.labels.shape != self.state_ids.shape:
            raise ValueError("one label per state is required")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature estimates must be finite")

    def __len__(self) -> int:
        return int(self.state_ids.size)

    @property
    def n(self) -> int:
        return len(self.ops[0]) if self.ops else 0

    def column_index(self) -> dict[str, int]:
        return {op: j for j, op in enumerate(self.ops)}

    def select(self, ops: Sequence[str]) -> "FeatureTable":
        col = self.column_index()
        missing = [op for op in ops if op not in col]
        if missing:
            raise KeyError(f"feature table lacks {len(missing)} operators, e.g. {missing[0]}")
        idx = [col[op] for op in ops]
        return FeatureTable(list(ops), self.state_ids.copy(), self.labels.copy(), self.values[:, idx], dict(self.meta))

    def subset(self, rows) -> "FeatureTable":
        rows = np.asarray(rows)
        return FeatureTable(list(self.ops), self.state_ids[rows], self.labels[rows], self.values[rows], dict(self.meta))

    def row(self, i: int) -> dict[str, float]:
        return dict(zip(self.ops, self.values[i].tolist()))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["state_id", "label", *self.ops])
            for sid, lab, vals in zip(self.state_ids, self.labels, self.values):
                w.writerow([int(sid), int(lab), *(repr(float(v)) for v in vals)])

    @classmethod
    def from_csv(cls, path) -> "FeatureTable":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][:2] != ["state_id", "label"]:
            raise ValueError("feature CSV must start with state_id,label")
        ops = rows[0][2:]
        body = rows[1:]
        ids = [int(r[0]) for r in body]
        labels = [int(r[1]) for r in body]
        vals = np.array([[float(v) for v in r[2:]] for r in body], dtype=np.float64).reshape(len(body), len(ops))
        return cls(ops, ids, labels, vals)


def build_feature_table(sets: Sequence[ShadowSet], ops: Sequence[PauliString | str], groups: int | None = None) -> FeatureTable:
    """Shadow estimates of every operator on every set (rows in input order)."""
    if not sets:
        raise ValueError("no shadow sets given")
    n = sets[0].n
    if any(s.n != n for s in sets):
        raise ValueError("shadow sets act on different qubit counts")
    strings = _as_strings(ops)
    if any(p.n != n for p in strings):
        raise ValueError("operators and shadow sets act on different qubit counts")
    tables = _op_tables(strings)
    values = np.array([_estimates(s, tables, groups) for s in sets]).reshape(len(sets), len(strings))
    return FeatureTable(
        [p.label for p in strings],
        [s.state_id for s in sets],
        [s.label for s in sets],
        values,
        {"mode": "shadows", "groups": groups or 1, "shots": [len(s) for s in sets]},
    )


# --------------------------------------------------------------------------- exact mode

_PAIR_TO_PAULI = np.array(
    # M[a, 2r + c] = P_a[c, r]
    [[1, 0, 0, 1], [0, 1, 1, 0], [0, 1j, -1j, 0], [1, 0, 0, -1]],
    dtype=np.complex128,
)


def _pauli_coefficients(rho: np.ndarray, w: int) -> np.ndarray:
    """``Tr[P rho]`` for all ``4**w`` Paulis; axis ``i`` of the result matches row axis ``i`` of ``rho``."""
    t = rho.reshape((2,) * (2 * w))
    perm = [ax for i in range(w) for ax in (i, w + i)]
    t = t.transpose(perm).reshape((4,) * w)
    for i in range(w):
        t = np.moveaxis(np.tensordot(_PAIR_TO_PAULI, t, axes=([1], [i])), 0, i)
    return t


def exact_pauli_expectations(sv, ops: Sequence[PauliString | str]) -> np.ndarray:
    """Exact ``<P>`` for every operator via reduced density matrices grouped by support."""
    sv = np.asarray(sv, dtype=np.complex128)
    n = int(sv.size).bit_length() - 1
    strings = _as_strings(ops)
    psi = sv.reshape((2,) * n) if n else sv
    out = np.empty(len(strings))
    by_support: dict[int, list[int]] = {}
    for i, p in enumerate(strings):
        if p.n != n:
            raise ValueError("operator and state act on different qubit counts")
        by_support.setdefault(p.x | p.z, []).append(i)
    norm = float(np.vdot(sv, sv).real)
    for mask, idx in by_support.items():
        sites = [q for q in range(n) if mask >> q & 1]
        if not sites:
            out[idx] = 1.0
            continue
        # numpy axis of qubit q is n-1-q; keep the support axes in ascending axis order
        keep = sorted(n - 1 - q for q in sites)
        rest = [a for a in range(n) if a not in keep]
        rho = np.tensordot(psi, psi.conj(), axes=(rest, rest))
        coeff = _pauli_coefficients(rho, len(keep)).real / norm
        qubit_of_axis = [n - 1 - a for a in keep]
        for i in idx:
            p = strings[i]
            code = tuple(_CODE[p.letter(q)] for q in qubit_of_axis)
            out[i] = coeff[code]
    return out


def exact_feature_table(states: Sequence[tuple[int, int, np.ndarray]], ops: Sequence[PauliString | str]) -> FeatureTable:
    """Feature table of exact expectations from ``(state_id, label, statevector)`` triples."""
    strings = _as_strings(ops)
    values = np.array([exact_pauli_expectations(sv, strings) for _, _, sv in states]).reshape(len(states), len(strings))
    return FeatureTable(
        [p.label for p in strings],
        [s for s, _, _ in states],
        [lab for _, lab, _ in states],
        values,
        {"mode": "exact"},
    )


def estimator_variance_bound(weight: int) -> float:
    """Upper bound ``3**k`` on the single-shot estimator variance of a weight-k Pauli."""
    return float(3**weight)


def standard_error(shadow: ShadowSet, P: PauliString | str) -> float:
    """Empirical standard error of :func:`estimate` (plain mean)."""
    (p,) = _as_strings([P])
    tables = _op_tables([p])
    S = len(shadow)
    singles = ksh.estimate_groups(shadow.bases, shadow.bits, *tables, np.arange(S + 1))[0]
    return float(singles.std(ddof=1) / math.sqrt(S)) if S > 1 else math.inf
