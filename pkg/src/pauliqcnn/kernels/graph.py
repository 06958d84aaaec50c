"""Forward/backward sweeps over a surrogate edge list.

Edges are grouped by propagation step (``step_ptr``); every edge of a step
shares one parameter.  Destination node ids are always newer than sources, so
one pass in storage order is a topological sweep.
"""

from __future__ import annotations

import numpy as np

from . import njit, use_numba

# kind: 0 pass, 1 cos, 2 +sin, 3 -sin


def step_factors(theta, step_param):
    t = theta[step_param]
    c, s = np.cos(t), np.sin(t)
    # value factors and their derivatives, indexed [step, kind]
    f = np.stack([np.ones_like(t), c, s, -s], axis=1)
    df = np.stack([np.zeros_like(t), -s, c, -c], axis=1)
    return f, df


@njit
def _forward_nb(n_nodes, roots, root_coeffs, step_ptr, f, esrc, edst, ekind):
    val = np.zeros(n_nodes)
    for i in range(roots.shape[0]):
        val[roots[i]] += root_coeffs[i]
    for g in range(step_ptr.shape[0] - 1):
        for e in range(step_ptr[g], step_ptr[g + 1]):
            val[edst[e]] += f[g, ekind[e]] * val[esrc[e]]
    return val


@njit
def _backward_nb(val, seed_nodes, seed, step_ptr, step_param, f, df, esrc, edst, ekind, n_params):
    adj = np.zeros(val.shape[0])
    for i in range(seed_nodes.shape[0]):
        adj[seed_nodes[i]] += seed[i]
    grad = np.zeros(n_params)
    for g in range(step_ptr.shape[0] - 2, -1, -1):
        acc = 0.0
        for e in range(step_ptr[g + 1] - 1, step_ptr[g] - 1, -1):
            a = adj[edst[e]]
            if a == 0.0:
                continue
            k = ekind[e]
            adj[esrc[e]] += f[g, k] * a
            acc += df[g, k] * val[esrc[e]] * a
        grad[step_param[g]] += acc
    return grad, adj


@njit
def _needed_nb(n_nodes, leaf_nodes, step_ptr, esrc, edst):
    need = np.zeros(n_nodes, dtype=np.bool_)
    for i in range(leaf_nodes.shape[0]):
        need[leaf_nodes[i]] = True
    keep = np.zeros(esrc.shape[0], dtype=np.bool_)
    for e in range(esrc.shape[0] - 1, -1, -1):
        if need[edst[e]]:
            need[esrc[e]] = True
            keep[e] = True
    return keep


def _forward_np(n_nodes, roots, root_coeffs, step_ptr, f, esrc, edst, ekind):
    val = np.zeros(n_nodes)
    np.add.at(val, roots, root_coeffs)
    for g in range(step_ptr.size - 1):
        a, b = step_ptr[g], step_ptr[g + 1]
        if a == b:
            continue
        # within a step no edge reads a node written in the same step
        np.add.at(val, edst[a:b], f[g, ekind[a:b]] * val[esrc[a:b]])
    return val


def _backward_np(val, seed_nodes, seed, step_ptr, step_param, f, df, esrc, edst, ekind, n_params):
    adj = np.zeros(val.size)
    np.add.at(adj, seed_nodes, seed)
    grad = np.zeros(n_params)
    for g in range(step_ptr.size - 2, -1, -1):
        a, b = step_ptr[g], step_ptr[g + 1]
        if a == b:
            continue
        k = ekind[a:b]
        ad = adj[edst[a:b]]
        src = esrc[a:b]
        np.add.at(adj, src, f[g, k] * ad)
        grad[step_param[g]] += float(np.sum(df[g, k] * val[src] * ad))
    return grad, adj


def _needed_np(n_nodes, leaf_nodes, step_ptr, esrc, edst):
    need = np.zeros(n_nodes, dtype=bool)
    need[leaf_nodes] = True
    keep = np.zeros(esrc.size, dtype=bool)
    for g in range(step_ptr.size - 2, -1, -1):
        a, b = step_ptr[g], step_ptr[g + 1]
        k = need[edst[a:b]]
        keep[a:b] = k
        need[esrc[a:b][k]] = True
    return keep


def forward(n_nodes, roots, root_coeffs, step_ptr, f, esrc, edst, ekind):
    fn = _forward_nb if use_numba() else _forward_np
    return fn(n_nodes, roots, root_coeffs, step_ptr, f, esrc, edst, ekind)


def backward(val, seed_nodes, seed, step_ptr, step_param, f, df, esrc, edst, ekind, n_params):
    fn = _backward_nb if use_numba() else _backward_np
    return fn(val, seed_nodes, seed, step_ptr, step_param, f, df, esrc, edst, ekind, n_params)


def needed_edges(n_nodes, leaf_nodes, step_ptr, esrc, edst):
    fn = _needed_nb if use_numba() else _needed_np
    return fn(n_nodes, leaf_nodes, step_ptr, esrc, edst)

