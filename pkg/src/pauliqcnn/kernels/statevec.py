"""Dense statevector helpers: Pauli action and batched Pauli expectations.

Bit ``q`` of a basis index is qubit ``q``; a Pauli with masks ``(x, z)`` maps
``|b>`` to ``i**popcount(x&z) * (-1)**popcount(b&z) |b ^ x>``.
"""

from __future__ import annotations

import numpy as np

from . import njit, use_numba


def _parity(a):
    a = np.asarray(a, dtype=np.uint64)
    out = np.zeros(a.shape, dtype=np.int64)
    while np.any(a):
        out ^= (a & np.uint64(1)).astype(np.int64)
        a = a >> np.uint64(1)
    return out


def apply_pauli(psi, x, z):
    """Return ``P @ psi`` for the Pauli with integer masks ``(x, z)``."""
    idx = np.arange(psi.size, dtype=np.uint64)
    ph = (1j) ** (bin(x & z).count("1") % 4)
    sgn = 1 - 2 * _parity(idx & np.uint64(z))
    out = np.empty_like(psi)
    out[(idx ^ np.uint64(x)).astype(np.int64)] = ph * sgn * psi
    return out


@njit
def _popcount(v):
    c = 0
    while v:
        v &= v - 1
        c += 1
    return c


@njit
def _expect_nb(psi, xs, zs):
    m = xs.shape[0]
    out = np.zeros(m)
    dim = psi.shape[0]
    for j in range(m):
        x = xs[j]
        z = zs[j]
        acc = 0.0 + 0.0j
        for b in range(dim):
            a = psi[b]
            if _popcount(b & z) & 1:
                a = -a
            acc += np.conj(psi[b ^ x]) * a
        k = _popcount(x & z) & 3
        if k == 0:
            out[j] = acc.real
        elif k == 1:
            out[j] = -acc.imag
        elif k == 2:
            out[j] = -acc.real
        else:
            out[j] = acc.imag
    return out


def _expect_np(psi, xs, zs):
    idx = np.arange(psi.size, dtype=np.int64)
    out = np.empty(xs.size)
    for j, (x, z) in enumerate(zip(xs.tolist(), zs.tolist())):
        sgn = 1 - 2 * _parity((idx & z).astype(np.uint64))
        acc = np.vdot(psi[idx ^ x], sgn * psi)
        out[j] = ((1j) ** (bin(x & z).count("1") % 4) * acc).real
    return out


def pauli_expectations(psi, xs, zs):
    """Real expectations of many Paulis (int64 masks, n < 63) on one statevector."""
    psi = np.ascontiguousarray(psi, dtype=np.complex128)
    xs = np.ascontiguousarray(xs, dtype=np.int64)
    zs = np.ascontiguousarray(zs, dtype=np.int64)
    if use_numba():
        return _expect_nb(psi, xs, zs)
    return _expect_np(psi, xs, zs)
