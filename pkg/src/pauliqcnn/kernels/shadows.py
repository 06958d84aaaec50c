"""Random-Pauli measurement sampling and shadow estimation.

Basis and letter codes follow :func:`pauliqcnn.paulis.letter_codes`
(1=X, 2=Y, 3=Z).  Sampling measures qubit 0 first and collapses, so each shot
costs about ``4 * 2**n`` complex operations instead of a full basis rotation.
"""

from __future__ import annotations

import math

import numpy as np

from . import njit, use_numba

_R = 1.0 / math.sqrt(2.0)
# rows map a qubit's (|0>, |1>) amplitudes to the measured basis' (+, -) amplitudes
ROTATIONS = np.array(
    [
        [[1, 0], [0, 1]],
        [[_R, _R], [_R, -_R]],
        [[_R, -1j * _R], [_R, 1j * _R]],
        [[1, 0], [0, 1]],
    ],
    dtype=np.complex128,
)


@njit
def _sample_nb(psi, bases, uniforms, rot, out):
    S, n = bases.shape
    half = psi.shape[0] >> 1
    src = np.empty(half, dtype=np.complex128)
    dst = np.empty(half, dtype=np.complex128)
    for s in range(S):
        norm = 0.0
        for j in range(psi.shape[0]):
            norm += psi[j].real * psi[j].real + psi[j].imag * psi[j].imag
        cur = psi
        size = psi.shape[0]
        for q in range(n):
            u = rot[bases[s, q]]
            h = size >> 1
            p0 = 0.0
            for j in range(h):
                a = u[0, 0] * cur[2 * j] + u[0, 1] * cur[2 * j + 1]
                p0 += a.real * a.real + a.imag * a.imag
            bit = 0 if uniforms[s, q] * norm < p0 else 1
            out[s, q] = bit
            for j in range(h):
                dst[j] = u[bit, 0] * cur[2 * j] + u[bit, 1] * cur[2 * j + 1]
            norm = p0 if bit == 0 else norm - p0
            cur = dst
            src, dst = dst, src
            size = h
    return out


def _sample_np(psi, bases, uniforms, rot, out):
    S, n = bases.shape
    norm0 = float(np.vdot(psi, psi).real)
    for s in range(S):
        cur = psi
        norm = norm0
        for q in range(n):
            u = rot[bases[s, q]]
            pairs = cur.reshape(-1, 2)
            a = pairs @ u[0]
            p0 = float(np.vdot(a, a).real)
            bit = 0 if uniforms[s, q] * norm < p0 else 1
            out[s, q] = bit
            cur = a if bit == 0 else pairs @ u[1]
            norm = p0 if bit == 0 else norm - p0
    return out


def sample_measurements(psi, bases, uniforms):
    """Outcome bits for shots with per-qubit ``bases`` driven by ``uniforms`` in [0, 1)."""
    psi = np.ascontiguousarray(psi, dtype=np.complex128)
    bases = np.ascontiguousarray(bases, dtype=np.int64)
    out = np.zeros(bases.shape, dtype=np.uint8)
    if bases.shape[1] == 0:
        return out
    fn = _sample_nb if use_numba() else _sample_np
    return fn(psi, bases, np.ascontiguousarray(uniforms, dtype=np.float64), ROTATIONS, out)


def group_bounds(S: int, groups: int) -> np.ndarray:
    """Boundaries of ``groups`` contiguous record groups (sizes differ by at most one)."""
    sizes = np.full(groups, S // groups, dtype=np.int64)
    sizes[: S % groups] += 1
    return np.concatenate([[0], np.cumsum(sizes)])


@njit
def _estimate_nb(bases, bits, sites, letters, weights, bounds):
    m = sites.shape[0]
    g = bounds.shape[0] - 1
    out = np.zeros((m, g))
    for o in range(m):
        w = weights[o]
        for k in range(g):
            acc = 0.0
            for s in range(bounds[k], bounds[k + 1]):
                v = 1.0
                for t in range(w):
                    q = sites[o, t]
                    if bases[s, q] != letters[o, t]:
                        v = 0.0
                        break
                    v *= -3.0 if bits[s, q] else 3.0
                acc += v
            out[o, k] = acc / (bounds[k + 1] - bounds[k])
    return out


def _estimate_np(bases, bits, sites, letters, weights, bounds):
    m = sites.shape[0]
    g = bounds.size - 1
    out = np.zeros((m, g))
    sign = np.where(bits == 1, -3.0, 3.0)
    for o in range(m):
        w = weights[o]
        q = sites[o, :w]
        match = np.all(bases[:, q] == letters[o, :w][None, :], axis=1)
        v = np.where(match, np.prod(sign[:, q], axis=1), 0.0)
        for k in range(g):
            out[o, k] = v[bounds[k] : bounds[k + 1]].mean()
    return out


def estimate_groups(bases, bits, sites, letters, weights, bounds):
    """Per-operator group means of the single-shot estimator ``prod 3 (-1)**b`` (or 0)."""
    args = (
        np.ascontiguousarray(bases, dtype=np.uint8),
        np.ascontiguousarray(bits, dtype=np.uint8),
        np.ascontiguousarray(sites, dtype=np.int64),
        np.ascontiguousarray(letters, dtype=np.uint8),
        np.ascontiguousarray(weights, dtype=np.int64),
        np.ascontiguousarray(bounds, dtype=np.int64),
    )
    fn = _estimate_nb if use_numba() else _estimate_np
    return fn(*args)
