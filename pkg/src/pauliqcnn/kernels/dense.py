"""Propagation step over the full 4**n Pauli index space.

String ``(x, z)`` lives at index ``x | z << n``.  A rotation with generator
masks ``(gx, gz)`` pairs each anticommuting index ``i`` with ``i ^ g`` where
``g = gx | gz << n``, so merging needs no lookup.  Branching and truncation
follow the sparse row store exactly: a dead index plays the role of a missing
row, and a sine branch into a dead index creates it.

Anticommutation and the branch sign depend only on the bits under the
generator support ("holes"), so pairs are enumerated directly: every
assignment of the remaining bits combined with every anticommuting local
configuration whose pair partner is larger.  The local configuration is the
outer loop so that every pass streams through memory in order.
"""

from __future__ import annotations

import numpy as np

from . import njit, use_numba
from .propagate import EDGE_COS, EDGE_SIN_NEG, EDGE_SIN_POS, NO_FREQ

DENSE_MAX_QUBITS = 11


@njit
def _pc(v):
    c = 0
    while v:
        v &= v - 1
        c += 1
    return c


@njit(inline="always")
def _deposit(r, holes):
    # spread the bits of r around zero bits at the ascending hole positions
    for t in range(holes.shape[0]):
        p = holes[t]
        r = ((r >> p) << (p + 1)) | (r & ((1 << p) - 1))
    return r


@njit(inline="always")
def _merge(a, b, rule):
    if rule == 0:
        return a if a < b else b
    return a if a > b else b


@njit(inline="always")
def _side(co, si_in, vs, vo, fs, fo, sg, c, s, rule, min_coeff):
    """New (alive, value, frequency) of one pair member."""
    if not (co or si_in):
        return False, 0.0, fs
    if co:
        v = c * vs
        if si_in:
            v = v + (-sg) * s * vo
            f = _merge(fs + 1, fo + 1, rule)
        else:
            f = fs + 1
    else:
        # created from the partner: coefficient sign(partner -> idx) * s
        v = (-sg) * s * vo
        f = fo + 1
    if abs(v) >= min_coeff:
        return True, v, f
    return False, 0.0, fs


@njit(inline="always")
def _weights_ok(i, j, n, maxw):
    if maxw >= n:
        return True, True
    full = (1 << n) - 1
    return _pc((i & full) | (i >> n)) <= maxw, _pc((j & full) | (j >> n)) <= maxw


@njit
def _numeric_pair_general(val, freq, alive, i, j, si, n, c, s, maxw, maxf, rule, min_coeff):
    ai, aj = alive[i], alive[j]
    vi, vj = val[i], val[j]
    fi, fj = freq[i], freq[j]
    fi_ok = fi + 1 <= maxf
    fj_ok = fj + 1 <= maxf
    wi_ok, wj_ok = _weights_ok(i, j, n, maxw)
    ok, v, f = _side(ai and fi_ok, aj and fj_ok and wi_ok, vi, vj, fi, fj, si, c, s, rule, min_coeff)
    alive[i] = ok
    val[i] = v
    if ok:
        freq[i] = f
    ok, v, f = _side(aj and fj_ok, ai and fi_ok and wj_ok, vj, vi, fj, fi, -si, c, s, rule, min_coeff)
    alive[j] = ok
    val[j] = v
    if ok:
        freq[j] = f


@njit
def _numeric_nb(val, freq, alive, n, g, holes, lows, lsign, c, s, maxw, maxf, rule, min_coeff):
    # the common case is written out in the loop body: numba's IR inlining of
    # a helper here costs several times the arithmetic
    for t in range(lows.shape[0]):
        si = lsign[t]
        for r in range(val.shape[0] >> holes.shape[0]):
            i = _deposit(r, holes) | lows[t]
            j = i ^ g
            ai, aj = alive[i], alive[j]
            if not (ai or aj):
                continue
            fi, fj = freq[i], freq[j]
            if not (ai and aj and fi + 1 <= maxf and fj + 1 <= maxf):
                _numeric_pair_general(val, freq, alive, i, j, si, n, c, s, maxw, maxf, rule, min_coeff)
                continue
            # both alive, hence both within the weight cap
            vi, vj = val[i], val[j]
            f = _merge(fi + 1, fj + 1, rule)
            wi = c * vi + (-si) * s * vj
            wj = c * vj + si * s * vi
            if min_coeff == 0.0 or abs(wi) >= min_coeff:
                val[i] = wi
                freq[i] = f
            else:
                alive[i] = False
                val[i] = 0.0
            if min_coeff == 0.0 or abs(wj) >= min_coeff:
                val[j] = wj
                freq[j] = f
            else:
                alive[j] = False
                val[j] = 0.0


@njit(inline="always")
def _symbolic_side(node, freq, idx, co, si_in, ns, no, fs, fo, sg, rule, n_nodes, esrc, edst, ekind, ecount):
    if not (co or si_in):
        node[idx] = -1
        return n_nodes, ecount
    nid = n_nodes
    f = NO_FREQ
    if co:
        esrc[ecount] = ns
        edst[ecount] = nid
        ekind[ecount] = EDGE_COS
        ecount += 1
        f = fs + 1
    if si_in:
        esrc[ecount] = no
        edst[ecount] = nid
        ekind[ecount] = EDGE_SIN_NEG if sg > 0 else EDGE_SIN_POS
        ecount += 1
        f = fo + 1 if not co else _merge(f, fo + 1, rule)
    node[idx] = nid
    freq[idx] = f
    return n_nodes + 1, ecount


@njit
def _symbolic_pair_general(node, freq, i, j, si, n, maxw, maxf, rule, n_nodes, esrc, edst, ekind, ecount):
    ni, nj = node[i], node[j]
    fi, fj = freq[i], freq[j]
    wi_ok, wj_ok = _weights_ok(i, j, n, maxw)
    ai_ok = ni >= 0 and fi + 1 <= maxf
    aj_ok = nj >= 0 and fj + 1 <= maxf
    n_nodes, ecount = _symbolic_side(
        node, freq, i, ai_ok, aj_ok and wi_ok, ni, nj, fi, fj, si, rule, n_nodes, esrc, edst, ekind, ecount
    )
    return _symbolic_side(
        node, freq, j, aj_ok, ai_ok and wj_ok, nj, ni, fj, fi, -si, rule, n_nodes, esrc, edst, ekind, ecount
    )


@njit
def _symbolic_nb(node, freq, n, g, holes, lows, lsign, maxw, maxf, rule, n_nodes, esrc, edst, ekind, ecount):
    for t in range(lows.shape[0]):
        si = lsign[t]
        # sine edge kinds into i (from j) and into j (from i)
        ki = EDGE_SIN_NEG if si > 0 else EDGE_SIN_POS
        kj = EDGE_SIN_POS if si > 0 else EDGE_SIN_NEG
        for r in range(node.shape[0] >> holes.shape[0]):
            i = _deposit(r, holes) | lows[t]
            j = i ^ g
            ni, nj = node[i], node[j]
            if ni < 0 and nj < 0:
                continue
            fi, fj = freq[i], freq[j]
            if not (ni >= 0 and nj >= 0 and fi + 1 <= maxf and fj + 1 <= maxf):
                n_nodes, ecount = _symbolic_pair_general(
                    node, freq, i, j, si, n, maxw, maxf, rule, n_nodes, esrc, edst, ekind, ecount
                )
                continue
            f = _merge(fi + 1, fj + 1, rule)
            esrc[ecount] = ni
            edst[ecount] = n_nodes
            ekind[ecount] = EDGE_COS
            esrc[ecount + 1] = nj
            edst[ecount + 1] = n_nodes
            ekind[ecount + 1] = ki
            esrc[ecount + 2] = nj
            edst[ecount + 2] = n_nodes + 1
            ekind[ecount + 2] = EDGE_COS
            esrc[ecount + 3] = ni
            edst[ecount + 3] = n_nodes + 1
            ekind[ecount + 3] = kj
            node[i] = n_nodes
            node[j] = n_nodes + 1
            freq[i] = f
            freq[j] = f
            n_nodes += 2
            ecount += 4
    return n_nodes, ecount


# --------------------------------------------------------------------------- tables


def _site_exp(sx, sz, px, pz):
    if sx and sz:
        return pz - px
    if sx:
        return pz * (2 * px - 1)
    if sz:
        return px * (1 - 2 * pz)
    return 0


def local_tables(n: int, mx: int, mz: int):
    """Hole positions, lower-member local offsets and their sine-branch signs.

    Returns
    -------
    holes : ascending index bit positions under the generator support
    lows : index offsets of the anticommuting local configurations whose
        partner ``i ^ g`` is larger
    lsign : sign of the sine branch out of each such configuration
    """
    sites = [q for q in range(n) if (mx | mz) >> q & 1]
    m = len(sites)
    holes = sorted(sites + [n + q for q in sites])
    g = mx | (mz << n)
    lows, lsign = [], []
    for c in range(1 << (2 * m)):
        e = par = off = 0
        for t, q in enumerate(sites):
            px, pz = c >> t & 1, c >> (m + t) & 1
            sx, sz = mx >> q & 1, mz >> q & 1
            par ^= (px & sz) ^ (pz & sx)
            e += _site_exp(sx, sz, px, pz)
            off |= (px << q) | (pz << (n + q))
        if par and off < off ^ g:
            lows.append(off)
            lsign.append(1 if e % 4 == 1 else -1)
    order = np.argsort(lows)
    return (
        np.array(holes, dtype=np.int64),
        np.array(lows, dtype=np.int64)[order],
        np.array(lsign, dtype=np.int64)[order],
    )


def _popcount_np(a):
    a = np.asarray(a, dtype=np.int64)
    out = np.zeros(a.shape, dtype=np.int64)
    while np.any(a):
        out += a & 1
        a = a >> 1
    return out


class _PairTables:
    """Pair indices in the same order as the compiled loops, for the numpy path."""

    def __init__(self, n, mx, mz):
        holes, lows, lsign = local_tables(n, mx, mz)
        base = np.arange(1 << (2 * n - holes.size), dtype=np.int64)
        for p in holes:
            base = ((base >> p) << (p + 1)) | (base & ((1 << p) - 1))
        g = mx | (mz << n)
        full = (1 << n) - 1
        self.i = (lows[:, None] | base[None, :]).ravel()
        self.j = self.i ^ g
        self.si = np.repeat(lsign, base.size)
        self.wi = _popcount_np((self.i & full) | (self.i >> n))
        self.wj = _popcount_np((self.j & full) | (self.j >> n))


def _merge_np(a, b, rule):
    return np.minimum(a, b) if rule == 0 else np.maximum(a, b)


def _sides_np(tb, alive_i, alive_j, fi, fj, maxw, maxf):
    ai = alive_i & (fi + 1 <= maxf)
    aj = alive_j & (fj + 1 <= maxf)
    return ai, aj & (tb.wi <= maxw), aj, ai & (tb.wj <= maxw)


def _numeric_np(val, freq, alive, tb, c, s, maxw, maxf, rule, min_coeff):
    i, j = tb.i, tb.j
    vi, vj, fi, fj = val[i], val[j], freq[i], freq[j]
    cos_i, sin_i, cos_j, sin_j = _sides_np(tb, alive[i], alive[j], fi, fj, maxw, maxf)
    for idx, co, sin_in, vs, vo, fs, fo, sg in (
        (i, cos_i, sin_i, vi, vj, fi, fj, tb.si),
        (j, cos_j, sin_j, vj, vi, fj, fi, -tb.si),
    ):
        both = co & sin_in
        v = np.where(co, c * vs, (-sg) * s * vo)
        v = np.where(both, c * vs + (-sg) * s * vo, v)
        f = np.where(both, _merge_np(fs + 1, fo + 1, rule), np.where(co, fs + 1, fo + 1))
        keep = (co | sin_in) & (np.abs(v) >= min_coeff)
        val[idx] = np.where(keep, v, 0.0)
        freq[idx] = np.where(keep, f, fs)
        alive[idx] = keep


def _interleave(a, b, mask):
    return np.stack([a[mask], b[mask]], 1).ravel()


def _symbolic_np(node, freq, tb, maxw, maxf, rule, n_nodes, esrc, edst, ekind, ecount):
    i, j = tb.i, tb.j
    ni, nj, fi, fj = node[i], node[j], freq[i], freq[j]
    touched = (ni >= 0) | (nj >= 0)
    cos_i, sin_i, cos_j, sin_j = _sides_np(tb, ni >= 0, nj >= 0, fi, fj, maxw, maxf)
    # the two members of each pair follow each other, as in the compiled loop
    co = _interleave(cos_i, cos_j, touched)
    sn = _interleave(sin_i, sin_j, touched)
    idx = _interleave(i, j, touched)
    ns = _interleave(ni, nj, touched)
    no = _interleave(nj, ni, touched)
    fs = _interleave(fi, fj, touched)
    fo = _interleave(fj, fi, touched)
    sg = _interleave(tb.si, -tb.si, touched)
    has = co | sn
    nid = np.full(idx.size, -1, dtype=np.int64)
    nid[has] = n_nodes + np.arange(int(has.sum()))
    n_nodes += int(has.sum())
    mask = np.stack([co, sn], 1)
    ne = int(mask.sum())
    esrc[ecount : ecount + ne] = np.stack([ns, no], 1)[mask]
    edst[ecount : ecount + ne] = np.stack([nid, nid], 1)[mask]
    kind = np.stack([np.full(idx.size, EDGE_COS), np.where(sg > 0, EDGE_SIN_NEG, EDGE_SIN_POS)], 1)
    ekind[ecount : ecount + ne] = kind[mask]
    ecount += ne
    f = np.where(co & sn, _merge_np(fs + 1, fo + 1, rule), np.where(co, fs + 1, fo + 1))
    node[idx] = nid
    freq[idx[has]] = f[has]
    return n_nodes, ecount


# --------------------------------------------------------------------------- dispatch


def gate_masks(nsite, word, bit, gx, gz):
    mx = mz = 0
    for s in range(nsite):
        q = 64 * int(word[s]) + int(bit[s])
        mx |= int(gx[s]) << q
        mz |= int(gz[s]) << q
    return mx, mz


class DenseStepper:
    """Runs dense steps for one system size, caching per-generator tables."""

    def __init__(self, n: int):
        self.n = n
        self._cache: dict = {}

    def _tables(self, mx, mz):
        key = (mx, mz, use_numba())
        if key not in self._cache:
            self._cache[key] = local_tables(self.n, mx, mz) if key[2] else _PairTables(self.n, mx, mz)
        return self._cache[key]

    def numeric(self, val, freq, alive, mx, mz, c, s, maxw, maxf, rule, min_coeff):
        tb = self._tables(mx, mz)
        if use_numba():
            g = mx | (mz << self.n)
            _numeric_nb(val, freq, alive, self.n, g, *tb, c, s, maxw, maxf, rule, min_coeff)
        else:
            _numeric_np(val, freq, alive, tb, c, s, maxw, maxf, rule, min_coeff)

    def symbolic(self, node, freq, mx, mz, maxw, maxf, rule, n_nodes, edges, ecount):
        esrc, edst, ekind = edges
        tb = self._tables(mx, mz)
        if use_numba():
            g = mx | (mz << self.n)
            return _symbolic_nb(node, freq, self.n, g, *tb, maxw, maxf, rule, n_nodes, esrc, edst, ekind, ecount)
        return _symbolic_np(node, freq, tb, maxw, maxf, rule, n_nodes, esrc, edst, ekind, ecount)
