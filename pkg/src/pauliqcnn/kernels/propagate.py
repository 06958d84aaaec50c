"""Per-gate Pauli-rotation step over a term store.

The store keeps every Pauli row ever created (dead rows stay as tombstones so a
key maps to at most one row).  A gate only touches rows that anticommute with
its generator ``G``; for such a row ``P`` the image is
``cos(t) P + sign * sin(t) Q`` with ``Q = G P`` up to phase and
``sign = -i * phase(G P)``.  ``P`` and ``Q`` pair up, so merging only ever
happens between an anticommuting row and the image of its partner, and the
partner's branch into ``P`` carries ``-sign``.

Two flavours share the same branching rules: a numeric one carrying
coefficients and a symbolic one emitting graph edges.

Row lookup uses an open-addressing hash table, or for small ``n`` a direct
table indexed by ``x | z << n`` (``dshift = n``), which stays cache resident.
"""

from __future__ import annotations

import numpy as np

from . import njit, use_numba

EDGE_PASS, EDGE_COS, EDGE_SIN_POS, EDGE_SIN_NEG = 0, 1, 2, 3
FREQ_MIN, FREQ_MAX = 0, 1
NO_FREQ = 1 << 62
DIRECT_MAX_QUBITS = 11


# --------------------------------------------------------------------------- numba


@njit
def _row_hash(X, Z, r):
    h = np.uint64(1469598103934665603)
    p = np.uint64(1099511628211)
    for k in range(X.shape[1]):
        h = (h ^ X[r, k]) * p
        h = (h ^ Z[r, k]) * p
    h ^= h >> np.uint64(31)
    h *= np.uint64(0x9E3779B97F4A7C15)
    h ^= h >> np.uint64(29)
    return h


@njit
def _rows_equal(X, Z, r, QX, QZ, j):
    for k in range(X.shape[1]):
        if X[r, k] != QX[j, k] or Z[r, k] != QZ[j, k]:
            return False
    return True


@njit
def _lookup(table, X, Z, QX, QZ, j, dshift):
    if dshift >= 0:
        return table[QX[j, 0] | (QZ[j, 0] << np.uint64(dshift))]
    mask = np.uint64(table.shape[0] - 1)
    slot = _row_hash(QX, QZ, j) & mask
    while True:
        r = table[slot]
        if r < 0:
            return -1
        if _rows_equal(X, Z, r, QX, QZ, j):
            return r
        slot = (slot + np.uint64(1)) & mask


@njit
def _insert(table, X, Z, r, dshift):
    if dshift >= 0:
        table[X[r, 0] | (Z[r, 0] << np.uint64(dshift))] = r
        return
    mask = np.uint64(table.shape[0] - 1)
    slot = _row_hash(X, Z, r) & mask
    while table[slot] >= 0:
        slot = (slot + np.uint64(1)) & mask
    table[slot] = r


@njit
def rebuild_table_nb(X, Z, count, table, dshift):
    table[:] = -1
    for r in range(count):
        _insert(table, X, Z, r, dshift)


@njit
def _scan_nb(X, Z, alive, count, nsite, word, bit, gx, gz, out):
    na = 0
    for r in range(count):
        if not alive[r]:
            continue
        par = 0
        for s in range(nsite):
            b = np.uint64(bit[s])
            px = np.int64((X[r, word[s]] >> b) & np.uint64(1))
            pz = np.int64((Z[r, word[s]] >> b) & np.uint64(1))
            par ^= (px & gz[s]) ^ (pz & gx[s])
        if par:
            out[na] = r
            na += 1
    return na


@njit
def _site_phase(gx, gz, px, pz):
    if gx == 0 and gz == 0:
        return 0
    if gx == 1 and gz == 1:
        return pz - px
    if gx == 1:
        return pz * (2 * px - 1)
    return px * (1 - 2 * pz)


@njit
def _images_nb(X, Z, wt, alive, anti, nsite, word, bit, gx, gz, table, dshift):
    na = anti.shape[0]
    W = X.shape[1]
    QX = np.empty((na, W), dtype=np.uint64)
    QZ = np.empty((na, W), dtype=np.uint64)
    sign = np.empty(na, dtype=np.int64)
    wq = np.empty(na, dtype=np.int64)
    partner = np.empty(na, dtype=np.int64)
    tomb = np.empty(na, dtype=np.int64)
    for j in range(na):
        r = anti[j]
        for k in range(W):
            QX[j, k] = X[r, k]
            QZ[j, k] = Z[r, k]
        e = 0
        dw = 0
        for s in range(nsite):
            b = np.uint64(bit[s])
            px = np.int64((X[r, word[s]] >> b) & np.uint64(1))
            pz = np.int64((Z[r, word[s]] >> b) & np.uint64(1))
            e += _site_phase(gx[s], gz[s], px, pz)
            if gx[s]:
                QX[j, word[s]] ^= np.uint64(1) << b
            if gz[s]:
                QZ[j, word[s]] ^= np.uint64(1) << b
            dw += ((px ^ gx[s]) | (pz ^ gz[s])) - (px | pz)
        sign[j] = 1 if e % 4 == 1 else -1
        wq[j] = wt[r] + dw
        p = _lookup(table, X, Z, QX, QZ, j, dshift)
        if p >= 0 and not alive[p]:
            tomb[j] = p
            partner[j] = -1
        else:
            tomb[j] = -1
            partner[j] = p
    return QX, QZ, sign, wq, partner, tomb


@njit
def _merge_freq(a, b, rule):
    if rule == 0:
        return a if a < b else b
    return a if a > b else b


@njit
def _place_images(X, Z, wt, freq, alive, count, table, dshift, QX, QZ, wq, qf, keepq, tomb, out_idx):
    for j in range(keepq.shape[0]):
        if not keepq[j]:
            out_idx[j] = -1
            continue
        t = tomb[j]
        if t >= 0:
            idx = t
        else:
            idx = count
            count += 1
            for k in range(X.shape[1]):
                X[idx, k] = QX[j, k]
                Z[idx, k] = QZ[j, k]
            _insert(table, X, Z, idx, dshift)
        wt[idx] = wq[j]
        freq[idx] = qf[j]
        alive[idx] = True
        out_idx[j] = idx
    return count


@njit
def _apply_numeric_nb(X, Z, wt, freq, alive, val, count, table, dshift, anti,
                      nsite, word, bit, gx, gz, c, s, maxw, maxf, rule, min_coeff):
    QX, QZ, sign, wq, partner, tomb = _images_nb(X, Z, wt, alive, anti, nsite, word, bit, gx, gz, table, dshift)
    na = anti.shape[0]
    newv = np.empty(na)
    newf = np.empty(na, dtype=np.int64)
    keep = np.zeros(na, dtype=np.bool_)
    qv = np.empty(na)
    qf = np.empty(na, dtype=np.int64)
    keepq = np.zeros(na, dtype=np.bool_)
    for j in range(na):
        r = anti[j]
        ok = freq[r] + 1 <= maxf
        v = 0.0
        f = NO_FREQ
        if ok:
            v = c * val[r]
            f = freq[r] + 1
        p = partner[j]
        if p >= 0 and freq[p] + 1 <= maxf:
            v = v + (-sign[j]) * s * val[p]
            f = freq[p] + 1 if not ok else _merge_freq(f, freq[p] + 1, rule)
            ok = True
        newv[j] = v
        newf[j] = f
        keep[j] = ok and abs(v) >= min_coeff
        qf[j] = freq[r] + 1
        if p < 0 and wq[j] <= maxw and freq[r] + 1 <= maxf:
            qv[j] = sign[j] * s * val[r]
            keepq[j] = abs(qv[j]) >= min_coeff
    for j in range(na):
        r = anti[j]
        if keep[j]:
            val[r] = newv[j]
            freq[r] = newf[j]
        else:
            alive[r] = False
    out_idx = np.empty(na, dtype=np.int64)
    count = _place_images(X, Z, wt, freq, alive, count, table, dshift, QX, QZ, wq, qf, keepq, tomb, out_idx)
    for j in range(na):
        if out_idx[j] >= 0:
            val[out_idx[j]] = qv[j]
    return count


@njit
def _apply_symbolic_nb(X, Z, wt, freq, alive, node, count, table, dshift, anti,
                       nsite, word, bit, gx, gz, maxw, maxf, rule,
                       n_nodes, esrc, edst, ekind, ecount):
    QX, QZ, sign, wq, partner, tomb = _images_nb(X, Z, wt, alive, anti, nsite, word, bit, gx, gz, table, dshift)
    na = anti.shape[0]
    newn = np.empty(na, dtype=np.int64)
    newf = np.empty(na, dtype=np.int64)
    for j in range(na):
        r = anti[j]
        ok = freq[r] + 1 <= maxf
        p = partner[j]
        sin_in = p >= 0 and freq[p] + 1 <= maxf
        if not (ok or sin_in):
            newn[j] = -1
            continue
        nid = n_nodes
        n_nodes += 1
        f = NO_FREQ
        if ok:
            esrc[ecount] = node[r]
            edst[ecount] = nid
            ekind[ecount] = 1
            ecount += 1
            f = freq[r] + 1
        if sin_in:
            esrc[ecount] = node[p]
            edst[ecount] = nid
            ekind[ecount] = 3 if sign[j] > 0 else 2
            ecount += 1
            f = freq[p] + 1 if not ok else _merge_freq(f, freq[p] + 1, rule)
        newn[j] = nid
        newf[j] = f
    qn = np.full(na, -1, dtype=np.int64)
    qf = np.empty(na, dtype=np.int64)
    keepq = np.zeros(na, dtype=np.bool_)
    for j in range(na):
        r = anti[j]
        qf[j] = freq[r] + 1
        if partner[j] < 0 and wq[j] <= maxw and freq[r] + 1 <= maxf:
            nid = n_nodes
            n_nodes += 1
            esrc[ecount] = node[r]
            edst[ecount] = nid
            ekind[ecount] = 2 if sign[j] > 0 else 3
            ecount += 1
            qn[j] = nid
            keepq[j] = True
    for j in range(na):
        r = anti[j]
        if newn[j] >= 0:
            node[r] = newn[j]
            freq[r] = newf[j]
        else:
            alive[r] = False
    out_idx = np.empty(na, dtype=np.int64)
    count = _place_images(X, Z, wt, freq, alive, count, table, dshift, QX, QZ, wq, qf, keepq, tomb, out_idx)
    for j in range(na):
        if out_idx[j] >= 0:
            node[out_idx[j]] = qn[j]
    return count, n_nodes, ecount


# --------------------------------------------------------------------------- numpy


def _void_keys(X, Z):
    rows = np.ascontiguousarray(np.hstack([X, Z]))
    return rows.view(np.dtype((np.void, rows.dtype.itemsize * rows.shape[1]))).ravel()


def _scan_np(X, Z, alive, count, nsite, word, bit, gx, gz):
    par = np.zeros(count, dtype=np.int64)
    for s in range(nsite):
        b = np.uint64(bit[s])
        px = ((X[:count, word[s]] >> b) & np.uint64(1)).astype(np.int64)
        pz = ((Z[:count, word[s]] >> b) & np.uint64(1)).astype(np.int64)
        par ^= (px & gz[s]) ^ (pz & gx[s])
    return np.flatnonzero((par == 1) & alive[:count])


def _images_np(X, Z, wt, alive, count, anti, nsite, word, bit, gx, gz):
    QX = X[anti].copy()
    QZ = Z[anti].copy()
    e = np.zeros(anti.size, dtype=np.int64)
    dw = np.zeros(anti.size, dtype=np.int64)
    for s in range(nsite):
        b = np.uint64(bit[s])
        px = ((X[anti, word[s]] >> b) & np.uint64(1)).astype(np.int64)
        pz = ((Z[anti, word[s]] >> b) & np.uint64(1)).astype(np.int64)
        if gx[s] and gz[s]:
            e += pz - px
        elif gx[s]:
            e += pz * (2 * px - 1)
        elif gz[s]:
            e += px * (1 - 2 * pz)
        if gx[s]:
            QX[:, word[s]] ^= np.uint64(1) << b
        if gz[s]:
            QZ[:, word[s]] ^= np.uint64(1) << b
        dw += ((px ^ gx[s]) | (pz ^ gz[s])) - (px | pz)
    sign = np.where(e % 4 == 1, 1, -1)
    wq = wt[anti] + dw
    keys = _void_keys(X[:count], Z[:count])
    order = np.argsort(keys, kind="stable")
    skeys = keys[order]
    qkeys = _void_keys(QX, QZ)
    pos = np.searchsorted(skeys, qkeys)
    pos_c = np.minimum(pos, max(count - 1, 0))
    found = (pos < count) & (skeys[pos_c] == qkeys) if count else np.zeros(anti.size, bool)
    hit = np.where(found, order[pos_c], -1)
    dead = (hit >= 0) & ~alive[np.maximum(hit, 0)]
    tomb = np.where(dead, hit, -1)
    partner = np.where(dead, -1, hit)
    return QX, QZ, sign, wq, partner, tomb


def _merge_freq_np(a, b, rule):
    return np.minimum(a, b) if rule == FREQ_MIN else np.maximum(a, b)


def _place_images_np(X, Z, wt, freq, alive, count, QX, QZ, wq, qf, keepq, tomb):
    out_idx = np.full(keepq.size, -1, dtype=np.int64)
    fresh = keepq & (tomb < 0)
    revive = keepq & (tomb >= 0)
    out_idx[revive] = tomb[revive]
    nf = int(fresh.sum())
    out_idx[fresh] = count + np.arange(nf)
    X[count:count + nf] = QX[fresh]
    Z[count:count + nf] = QZ[fresh]
    idx = out_idx[keepq]
    wt[idx] = wq[keepq]
    freq[idx] = qf[keepq]
    alive[idx] = True
    return count + nf, out_idx


def _branching_np(freq, anti, partner, sign, wq, maxw, maxf, rule):
    f_self = freq[anti] + 1
    ok = f_self <= maxf
    has_p = partner >= 0
    f_p = np.where(has_p, freq[np.maximum(partner, 0)] + 1, NO_FREQ)
    sin_in = has_p & (f_p <= maxf)
    newf = np.where(ok & sin_in, _merge_freq_np(f_self, f_p, rule), np.where(ok, f_self, f_p))
    keepq = ~has_p & (wq <= maxw) & ok
    return ok, sin_in, newf, keepq, f_self


def _apply_numeric_np(X, Z, wt, freq, alive, val, count, anti,
                      nsite, word, bit, gx, gz, c, s, maxw, maxf, rule, min_coeff):
    QX, QZ, sign, wq, partner, tomb = _images_np(X, Z, wt, alive, count, anti, nsite, word, bit, gx, gz)
    ok, sin_in, newf, keepq, qf = _branching_np(freq, anti, partner, sign, wq, maxw, maxf, rule)
    v = np.where(ok, c * val[anti], 0.0)
    v = v + np.where(sin_in, (-sign) * s * val[np.maximum(partner, 0)], 0.0)
    keep = (ok | sin_in) & (np.abs(v) >= min_coeff)
    qv = sign * s * val[anti]
    keepq &= np.abs(qv) >= min_coeff
    val[anti[keep]] = v[keep]
    freq[anti[keep]] = newf[keep]
    alive[anti[~keep]] = False
    count, out_idx = _place_images_np(X, Z, wt, freq, alive, count, QX, QZ, wq, qf, keepq, tomb)
    val[out_idx[keepq]] = qv[keepq]
    return count


def _apply_symbolic_np(X, Z, wt, freq, alive, node, count, anti,
                       nsite, word, bit, gx, gz, maxw, maxf, rule,
                       n_nodes, esrc, edst, ekind, ecount):
    QX, QZ, sign, wq, partner, tomb = _images_np(X, Z, wt, alive, count, anti, nsite, word, bit, gx, gz)
    ok, sin_in, newf, keepq, qf = _branching_np(freq, anti, partner, sign, wq, maxw, maxf, rule)
    has = ok | sin_in
    newn = np.full(anti.size, -1, dtype=np.int64)
    newn[has] = n_nodes + np.arange(int(has.sum()))
    n_nodes += int(has.sum())
    # two edge slots per anticommuting row, (cos, incoming sin), in row order
    src = np.stack([node[anti], node[np.maximum(partner, 0)]], axis=1)
    dst = np.stack([newn, newn], axis=1)
    kind = np.stack([np.full(anti.size, EDGE_COS), np.where(sign > 0, EDGE_SIN_NEG, EDGE_SIN_POS)], axis=1)
    mask = np.stack([ok, sin_in], axis=1)
    ne = int(mask.sum())
    esrc[ecount:ecount + ne] = src[mask]
    edst[ecount:ecount + ne] = dst[mask]
    ekind[ecount:ecount + ne] = kind[mask]
    ecount += ne
    qn = np.full(anti.size, -1, dtype=np.int64)
    nq = int(keepq.sum())
    qn[keepq] = n_nodes + np.arange(nq)
    n_nodes += nq
    esrc[ecount:ecount + nq] = node[anti[keepq]]
    edst[ecount:ecount + nq] = qn[keepq]
    ekind[ecount:ecount + nq] = np.where(sign[keepq] > 0, EDGE_SIN_POS, EDGE_SIN_NEG)
    ecount += nq
    node[anti[has]] = newn[has]
    freq[anti[has]] = newf[has]
    alive[anti[~has]] = False
    count, out_idx = _place_images_np(X, Z, wt, freq, alive, count, QX, QZ, wq, qf, keepq, tomb)
    node[out_idx[keepq]] = qn[keepq]
    return count, n_nodes, ecount


# --------------------------------------------------------------------------- dispatch


def scan_anticommuting(X, Z, alive, count, gate):
    nsite, word, bit, gx, gz = gate
    if use_numba():
        out = np.empty(count, dtype=np.int64)
        na = _scan_nb(X, Z, alive, count, nsite, word, bit, gx, gz, out)
        return out[:na]
    return _scan_np(X, Z, alive, count, nsite, word, bit, gx, gz)


def rebuild_table(X, Z, count, table, dshift=-1):
    if use_numba():
        rebuild_table_nb(X, Z, count, table, dshift)


def apply_numeric(store, anti, gate, c, s, maxw, maxf, rule, min_coeff):
    nsite, word, bit, gx, gz = gate
    st = store
    if use_numba():
        return _apply_numeric_nb(st.X, st.Z, st.wt, st.freq, st.alive, st.payload, st.count, st.table, st.dshift,
                                 anti, nsite, word, bit, gx, gz, c, s, maxw, maxf, rule, min_coeff)
    return _apply_numeric_np(st.X, st.Z, st.wt, st.freq, st.alive, st.payload, st.count,
                             anti, nsite, word, bit, gx, gz, c, s, maxw, maxf, rule, min_coeff)


def apply_symbolic(store, anti, gate, maxw, maxf, rule, n_nodes, edges, ecount):
    nsite, word, bit, gx, gz = gate
    st = store
    esrc, edst, ekind = edges
    if use_numba():
        return _apply_symbolic_nb(st.X, st.Z, st.wt, st.freq, st.alive, st.payload, st.count, st.table, st.dshift,
                                  anti, nsite, word, bit, gx, gz, maxw, maxf, rule,
                                  n_nodes, esrc, edst, ekind, ecount)
    return _apply_symbolic_np(st.X, st.Z, st.wt, st.freq, st.alive, st.payload, st.count,
                              anti, nsite, word, bit, gx, gz, maxw, maxf, rule,
                              n_nodes, esrc, edst, ekind, ecount)
