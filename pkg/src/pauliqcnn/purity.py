"""Average k-purities of a single-site observable evolved through a Haar-random QCNN.

Averaging ``Tr[P U^dag O U]**2`` over independent Haar two-qubit gates reduces to
propagating ``|O (x) O>>`` through a network of 4x4 "P-gates" acting on the
two-copy commutant basis ``{|i>, |s>}`` (identity and swap per site).  Three
independent routes are provided:

* :func:`purities_network` propagates sparse ``{i, s}`` strings gate by gate;
* :func:`purities_recursive` sums over s-content trajectories of a
  non-crossing QCNN with ``L`` layers;
* :func:`purities_mc` samples Haar gates and decomposes the evolved operator.

Both exact routes use rational arithmetic, so they agree bit for bit.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .circuits import QcnnLayout

A_COEFF = Fraction(2, 5)
# |P (x) P>> for a single-site Pauli projects onto (2/3)|s> - (1/3)|i>
S_WEIGHT = Fraction(2, 3)
I_WEIGHT = Fraction(-1, 3)
CONVENTION = (
    "per-string weight binom(m,k) (3/2)^k (1/2)^(m-k) for m swap sites; "
    "initial vector (2/3)|s i..i> - (1/3)|i..i>; p(0) is the net identity mass"
)
MC_MAX_QUBITS = 10


@dataclass
class PurityDistribution:
    """``values[k]`` is the average k-purity; ``values[0]`` is the identity mass."""

    n: int
    values: dict[int, float]
    method: str
    stderr: dict[int, float] | None = None
    convention: str = CONVENTION
    meta: dict = field(default_factory=dict)

    def total(self) -> float:
        return float(sum(self.values.values()))

    def per_pauli(self) -> dict[int, float]:
        """Average contribution of one weight-k Pauli: ``p(k) / (3**k binom(n, k))``."""
        return {k: v / (3**k * math.comb(self.n, k)) for k, v in self.values.items()}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "value", "per_pauli", "stderr", "method"])
            per = self.per_pauli()
            for k in sorted(self.values):
                se = "" if self.stderr is None else repr(self.stderr[k])
                w.writerow([k, repr(self.values[k]), repr(per[k]), se, self.method])

    @classmethod
    def from_csv(cls, path, n: int) -> "PurityDistribution":
        values, stderr, method = {}, {}, ""
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                k = int(row["k"])
                values[k] = float(row["value"])
                if row["stderr"]:
                    stderr[k] = float(row["stderr"])
                method = row["method"]
        return cls(n, values, method, stderr or None)


def _split(strings: dict[int, Fraction], n: int) -> dict[int, Fraction]:
    """Map ``{swap-site mask: amplitude}`` to k-purities."""
    out = {k: Fraction(0) for k in range(n + 1)}
    by_m: dict[int, Fraction] = {}
    for mask, amp in strings.items():
        m = mask.bit_count()
        by_m[m] = by_m.get(m, Fraction(0)) + amp
    for m, amp in by_m.items():
        for k in range(m + 1):
            out[k] += amp * math.comb(m, k) * Fraction(3, 2) ** k * Fraction(1, 2) ** (m - k)
    return out


def pgate_apply(state: dict[int, Fraction], q1: int, q2: int) -> dict[int, Fraction]:
    """Apply the P-gate to sites ``q1, q2`` of a sparse ``{swap-site mask: amplitude}`` state.

    ``|ii>`` and ``|ss>`` are fixed; ``|is>`` and ``|si>`` map to ``a(|ii> + |ss>)``.
    """
    if q1 == q2:
        raise ValueError("P-gate sites must differ")
    b1, b2 = 1 << q1, 1 << q2
    out: dict[int, Fraction] = {}
    for mask, amp in state.items():
        s1, s2 = bool(mask & b1), bool(mask & b2)
        if s1 == s2:
            targets = ((mask, amp),)
        else:
            base = mask & ~(b1 | b2)
            targets = ((base, A_COEFF * amp), (base | b1 | b2, A_COEFF * amp))
        for key, v in targets:
            out[key] = out.get(key, Fraction(0)) + v
    return {k: v for k, v in out.items() if v != 0}


def _to_float(n: int, vals: dict[int, Fraction], method: str, **meta) -> PurityDistribution:
    return PurityDistribution(n, {k: float(v) for k, v in vals.items()}, method, meta=dict(meta))


def purities_network(layout: QcnnLayout, site: int | None = None, blocks=None) -> PurityDistribution:
    """Propagate ``|O (x) O>>`` for a single-site Pauli through one P-gate per block.

    Blocks are taken in reverse circuit order (Heisenberg picture).  ``site``
    defaults to the first readout qubit; ``blocks`` overrides the layout's
    block list (an empty list gives the untouched observable).
    """
    n = layout.n
    site = layout.readout_qubits[0] if site is None else site
    blocks = layout.blocks() if blocks is None else list(blocks)
    state = {1 << site: S_WEIGHT, 0: I_WEIGHT}
    for q1, q2 in reversed(blocks):
        state = pgate_apply(state, q1, q2)
    vals = _split(state, n)
    return _to_float(n, vals, "network", strings=len(state), blocks=len(blocks))


def purities_recursive(L: int, n: int | None = None) -> PurityDistribution:
    """Average k-purities of a non-crossing QCNN with ``L`` layers (``n = 2**L`` by default).

    Dynamic programme over the s-content ``k_j`` (number of swap pairs after
    layer ``j``): ``k_1 = 1`` with weight ``a``; a state with ``k`` pairs has
    ``2k`` swap sites, each meeting an identity in the next layer, which yields
    ``binom(2k, k')`` states with ``k'`` pairs and a factor ``a**(2k)``.
    Trajectories that return to ``k = 0`` only feed the identity mass, which is
    fixed afterwards by tracelessness.
    """
    if L < 1:
        raise ValueError("L must be at least 1")
    n = 2**L if n is None else n
    if n < 2**L:
        raise ValueError(f"{L} non-crossing layers need n >= {2**L}")
    dist = {1: A_COEFF}
    for _ in range(L - 1):
        nxt: dict[int, Fraction] = {}
        for k, w in dist.items():
            f = w * A_COEFF ** (2 * k)
            for k2 in range(1, 2 * k + 1):
                nxt[k2] = nxt.get(k2, Fraction(0)) + f * math.comb(2 * k, k2)
        dist = nxt
    vals = {k: Fraction(0) for k in range(n + 1)}
    for kl, w in dist.items():
        m = 2 * kl
        for k in range(1, m + 1):
            vals[k] += S_WEIGHT * w * math.comb(m, k) * Fraction(3, 2) ** k * Fraction(1, 2) ** (m - k)
    # the operator is traceless, so the identity component is exactly zero
    vals[0] = 1 - sum(vals[k] for k in range(1, n + 1))
    return _to_float(n, vals, "recursive", layers=L)


# --------------------------------------------------------------------------- Monte Carlo


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random ``d x d`` unitary: QR of a complex Gaussian with the R-diagonal phases removed."""
    g = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / math.sqrt(2)
    q, r = np.linalg.qr(g)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph[None, :]


_PAULI_BASIS = np.array(
    [[[1, 0], [0, 1]], [[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=np.complex128
)


def _conjugate(op: np.ndarray, u: np.ndarray, q1: int, q2: int, n: int) -> np.ndarray:
    """``u^dag op u`` with ``u`` on qubits ``(q1, q2)`` (``q1`` is the high bit of ``u``'s index)."""
    t = op.reshape((2,) * (2 * n))
    r1, r2 = n - 1 - q1, n - 1 - q2
    c1, c2 = 2 * n - 1 - q1, 2 * n - 1 - q2
    ud = u.conj().T.reshape(2, 2, 2, 2)
    uu = u.reshape(2, 2, 2, 2)
    # rows: (u^dag)[a b, r1 r2] op[r1 r2, ...]
    t = np.tensordot(ud, t, axes=([2, 3], [r1, r2]))
    t = np.moveaxis(t, [0, 1], [r1, r2])
    # columns: op[..., c1 c2] u[c1 c2, a b]
    t = np.tensordot(t, uu, axes=([c1, c2], [0, 1]))
    t = np.moveaxis(t, [2 * n - 2, 2 * n - 1], [c1, c2])
    return t.reshape(op.shape)


def _pair_to_pauli() -> np.ndarray:
    # M[a, 2r + c] = P_a[c, r], so contracting with op[r, c] gives Tr[P_a op] per site
    m = np.empty((4, 4), dtype=np.complex128)
    for a in range(4):
        for r in range(2):
            for c in range(2):
                m[a, 2 * r + c] = _PAULI_BASIS[a][c, r]
    return m


_PAIR_TO_PAULI = _pair_to_pauli()


def _index_weights(n: int) -> np.ndarray:
    w = np.zeros(1, dtype=np.int64)
    nz = (np.arange(4) != 0).astype(np.int64)
    for _ in range(n):
        w = (w[:, None] + nz[None, :]).reshape(-1)
    return w


def pauli_weight_masses(op: np.ndarray, n: int) -> np.ndarray:
    """``sum_{|P|=k} (Tr[P op] / 2**n)**2`` for ``k = 0..n``."""
    t = op.reshape((2,) * (2 * n))
    perm = [ax for i in range(n) for ax in (i, n + i)]
    t = t.transpose(perm).reshape((4,) * n)
    for i in range(n):
        t = np.moveaxis(np.tensordot(_PAIR_TO_PAULI, t, axes=([1], [i])), 0, i)
    coeff = t.reshape(-1) / 2**n
    return np.bincount(_index_weights(n), weights=np.abs(coeff) ** 2, minlength=n + 1)


def purities_mc(layout: QcnnLayout, samples: int, seed: int, site: int | None = None, blocks=None) -> PurityDistribution:
    """Monte-Carlo k-purities with one Haar two-qubit unitary per block.

    Returns sample means with standard errors.  Limited to ``n <= 10``.
    """
    n = layout.n
    if n > MC_MAX_QUBITS:
        raise ValueError(f"Monte-Carlo purities need n <= {MC_MAX_QUBITS}, got {n}")
    if samples < 2:
        raise ValueError("need at least two samples")
    site = layout.readout_qubits[0] if site is None else site
    blocks = layout.blocks() if blocks is None else list(blocks)
    rng = np.random.default_rng(seed)
    dim = 2**n
    z = np.where((np.arange(dim) >> site) & 1, -1.0, 1.0).astype(np.complex128)
    obs = np.diag(z)
    acc = np.empty((samples, n + 1))
    for s in range(samples):
        op = obs
        for q1, q2 in reversed(blocks):
            op = _conjugate(op, haar_unitary(4, rng), q1, q2, n)
        acc[s] = pauli_weight_masses(op, n)
    mean = acc.mean(axis=0)
    se = acc.std(axis=0, ddof=1) / math.sqrt(samples)
    return PurityDistribution(
        n,
        {k: float(mean[k]) for k in range(n + 1)},
        "mc",
        {k: float(se[k]) for k in range(n + 1)},
        meta={"samples": samples, "seed": seed, "blocks": len(blocks)},
    )
