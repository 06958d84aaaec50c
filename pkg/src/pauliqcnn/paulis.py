"""Pauli strings in symplectic (x, z) bitmask form and real-weighted Pauli sums.

Site ``q`` of a string carries I/X/Y/Z for ``(x_q, z_q) = (0,0)/(1,0)/(1,1)/(0,1)``.
Qubit 1 of the text form (leftmost letter) is bit 0 of the masks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

_LETTER_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_BITS_LETTER = {v: k for k, v in _LETTER_BITS.items()}
_PHASES = (1, 1j, -1, -1j)


class PauliSizeError(ValueError):
    """Raised when Pauli operands act on different numbers of qubits."""


@dataclass(frozen=True, order=True)
class PauliString:
    """Immutable n-qubit Pauli string without phase.

    Ordering (and hence the canonical key) is lexicographic in ``(n, x, z)``.
    """

    n: int
    x: int
    z: int

    def __post_init__(self):
        full = (1 << self.n) - 1
        if self.n < 0 or self.x & ~full or self.z & ~full:
            raise ValueError("bitmask exceeds qubit count")

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        x = z = 0
        for q, ch in enumerate(label.strip().upper()):
            try:
                bx, bz = _LETTER_BITS[ch]
            except KeyError:
                raise ValueError(f"invalid Pauli letter {ch!r} in {label!r}") from None
            x |= bx << q
            z |= bz << q
        return cls(len(label.strip()), x, z)

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(n, 0, 0)

    @classmethod
    def single(cls, n: int, sites: Mapping[int, str] | Iterable[tuple[int, str]]) -> "PauliString":
        """Build a string from ``{qubit: letter}`` with 0-based qubit indices."""
        items = sites.items() if isinstance(sites, Mapping) else sites
        x = z = 0
        for q, ch in items:
            if not 0 <= q < n:
                raise ValueError(f"qubit {q} out of range for n={n}")
            bx, bz = _LETTER_BITS[ch.upper()]
            x |= bx << q
            z |= bz << q
        return cls(n, x, z)

    @property
    def label(self) -> str:
        return "".join(self.letter(q) for q in range(self.n))

    def letter(self, q: int) -> str:
        return _BITS_LETTER[((self.x >> q) & 1, (self.z >> q) & 1)]

    @property
    def key(self) -> tuple[int, int]:
        return (self.x, self.z)

    @property
    def support_mask(self) -> int:
        return self.x | self.z

    def support(self) -> list[int]:
        m = self.x | self.z
        return [q for q in range(self.n) if (m >> q) & 1]

    def weight(self) -> int:
        return (self.x | self.z).bit_count()

    def __str__(self) -> str:
        return self.label

    def __repr__(self) -> str:
        return f"PauliString({self.label!r})"


def weight(p: PauliString) -> int:
    return p.weight()


def _check_sizes(p: PauliString, q: PauliString) -> None:
    if p.n != q.n:
        raise PauliSizeError(f"qubit counts differ: {p.n} vs {q.n}")


def phase_exponent(x1: int, z1: int, x2: int, z2: int) -> int:
    """Exponent ``e`` (mod 4) with ``P1 P2 = i**e * P(x1^x2, z1^z2)``."""
    X1, Y1, Z1 = x1 & ~z1, x1 & z1, z1 & ~x1
    X2, Y2, Z2 = x2 & ~z2, x2 & z2, z2 & ~x2
    plus = (X1 & Y2) | (Y1 & Z2) | (Z1 & X2)
    minus = (X1 & Z2) | (Y1 & X2) | (Z1 & Y2)
    return (plus.bit_count() - minus.bit_count()) % 4


def multiply(p: PauliString, q: PauliString) -> tuple[complex, PauliString]:
    """Return ``(phase, r)`` with ``p @ q == phase * r`` and phase in {1, -1, 1j, -1j}."""
    _check_sizes(p, q)
    e = phase_exponent(p.x, p.z, q.x, q.z)
    return _PHASES[e], PauliString(p.n, p.x ^ q.x, p.z ^ q.z)


def commutes(p: PauliString, q: PauliString) -> bool:
    _check_sizes(p, q)
    return ((p.x & q.z) ^ (p.z & q.x)).bit_count() % 2 == 0


def n_words(n: int) -> int:
    return max(1, (n + 63) // 64)


def ints_to_words(values: Iterable[int], n: int) -> np.ndarray:
    """Pack Python-int bitmasks into a ``(len, words)`` uint64 array."""
    values = list(values)
    w = n_words(n)
    out = np.zeros((len(values), w), dtype=np.uint64)
    mask = (1 << 64) - 1
    for i, v in enumerate(values):
        for k in range(w):
            out[i, k] = (v >> (64 * k)) & mask
    return out


def words_to_ints(words: np.ndarray) -> list[int]:
    words = np.atleast_2d(words)
    out = []
    for row in words:
        v = 0
        for k, wv in enumerate(row):
            v |= int(wv) << (64 * k)
        out.append(v)
    return out


def strings_to_arrays(strings: Iterable[PauliString], n: int) -> tuple[np.ndarray, np.ndarray]:
    strings = list(strings)
    return ints_to_words((s.x for s in strings), n), ints_to_words((s.z for s in strings), n)


def arrays_to_strings(x: np.ndarray, z: np.ndarray, n: int) -> list[PauliString]:
    return [PauliString(n, a, b) for a, b in zip(words_to_ints(x), words_to_ints(z))]


def letter_codes(x: np.ndarray, z: np.ndarray, n: int) -> np.ndarray:
    """Per-site letter codes (0=I, 1=X, 2=Y, 3=Z) as an ``(rows, n)`` int8 array."""
    rows = x.shape[0]
    out = np.zeros((rows, n), dtype=np.int8)
    for q in range(n):
        w, b = divmod(q, 64)
        xb = ((x[:, w] >> np.uint64(b)) & np.uint64(1)).astype(np.int8)
        zb = ((z[:, w] >> np.uint64(b)) & np.uint64(1)).astype(np.int8)
        # (x,z): X=(1,0)->1, Y=(1,1)->2, Z=(0,1)->3
        out[:, q] = np.where(xb == 1, 1 + zb, 3 * zb)
    return out


class PauliSum:
    """Sparse real linear combination of n-qubit Pauli strings."""

    __slots__ = ("n", "terms")

    def __init__(self, n: int, terms: Mapping[PauliString, float] | None = None):
        self.n = n
        self.terms: dict[PauliString, float] = {}
        if terms:
            for p, c in terms.items():
                self.add_term(p, c)

    @classmethod
    def from_labels(cls, mapping: Mapping[str, float]) -> "PauliSum":
        items = [(PauliString.from_label(k), float(v)) for k, v in mapping.items()]
        if not items:
            raise ValueError("cannot infer qubit count from an empty mapping")
        out = cls(items[0][0].n)
        for p, c in items:
            out.add_term(p, c)
        return out

    @classmethod
    def from_string(cls, p: PauliString, coeff: float = 1.0) -> "PauliSum":
        return cls(p.n, {p: coeff})

    def add_term(self, p: PauliString, coeff: float) -> None:
        if p.n != self.n:
            raise PauliSizeError(f"term on {p.n} qubits added to {self.n}-qubit sum")
        c = self.terms.get(p, 0.0) + float(coeff)
        if c == 0.0:
            self.terms.pop(p, None)
        else:
            self.terms[p] = c

    def __add__(self, other: "PauliSum") -> "PauliSum":
        if other.n != self.n:
            raise PauliSizeError("sums act on different qubit counts")
        out = self.copy()
        for p, c in other.terms.items():
            out.add_term(p, c)
        return out

    def __mul__(self, scalar: float) -> "PauliSum":
        return PauliSum(self.n, {p: c * scalar for p, c in self.terms.items()})

    __rmul__ = __mul__

    def copy(self) -> "PauliSum":
        out = PauliSum(self.n)
        out.terms = dict(self.terms)
        return out

    def prune(self, threshold: float) -> "PauliSum":
        if threshold < 0:
            raise ValueError("threshold must be non-negative")
        out = PauliSum(self.n)
        out.terms = {p: c for p, c in self.terms.items() if abs(c) >= threshold}
        return out

    def squared_norm(self) -> float:
        return float(sum(c * c for c in self.terms.values()))

    def coefficient(self, p: PauliString | str) -> float:
        if isinstance(p, str):
            p = PauliString.from_label(p)
        return self.terms.get(p, 0.0)

    def items(self) -> list[tuple[PauliString, float]]:
        """Terms in canonical key order."""
        return sorted(self.terms.items(), key=lambda kv: kv[0].key)

    def to_labels(self) -> dict[str, float]:
        return {p.label: c for p, c in self.items()}

    def to_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        items = self.items()
        x, z = strings_to_arrays((p for p, _ in items), self.n)
        return x, z, np.array([c for _, c in items], dtype=np.float64)

    def max_weight(self) -> int:
        return max((p.weight() for p in self.terms), default=0)

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self) -> Iterator[PauliString]:
        return iter(self.terms)

    def __eq__(self, other) -> bool:
        return isinstance(other, PauliSum) and self.n == other.n and self.terms == other.terms

    def __repr__(self) -> str:
        body = ", ".join(f"{p.label}: {c:.6g}" for p, c in self.items()[:6])
        more = "" if len(self) <= 6 else f", ... (+{len(self) - 6})"
        return f"PauliSum(n={self.n}, {{{body}{more}}})"


def sum_add(a: PauliSum, b: PauliSum) -> PauliSum:
    return a + b


def sum_prune(s: PauliSum, threshold: float) -> PauliSum:
    return s.prune(threshold)
