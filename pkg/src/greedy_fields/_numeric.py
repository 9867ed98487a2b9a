"""Low-level numba helpers shared by the solver and oracle kernels.

All Euclidean distances in the package go through :func:`dist`, so that every
exact comparison (solver, oracle, checks) sees bit-identical edge lengths.
"""

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def dist(a, b):
    s = 0.0
    for k in range(a.shape[0]):
        t = a[k] - b[k]
        s += t * t
    return np.sqrt(s)


@njit(cache=True)
def pairwise(P):
    n = P.shape[0]
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            v = dist(P[i], P[j])
            D[i, j] = v
            D[j, i] = v
    return D


@njit(cache=True)
def to_point(P, x):
    n = P.shape[0]
    out = np.empty(n)
    for i in range(n):
        out[i] = dist(P[i], x)
    return out


@njit(cache=True)
def prim_length(D, idx, m):
    """Minimum spanning tree length over the first ``m`` entries of ``idx``."""
    if m <= 1:
        return 0.0
    key = np.empty(m)
    used = np.zeros(m, dtype=np.bool_)
    for i in range(m):
        key[i] = np.inf
    key[0] = 0.0
    total = 0.0
    for _ in range(m):
        best = -1
        bv = np.inf
        for i in range(m):
            if not used[i] and key[i] < bv:
                bv = key[i]
                best = i
        used[best] = True
        total += bv
        a = idx[best]
        for i in range(m):
            if not used[i]:
                v = D[a, idx[i]]
                if v < key[i]:
                    key[i] = v
    return total


@njit(cache=True)
def prim_edges(D, idx, m):
    """Edges (as positions into ``idx``) of the tree built by :func:`prim_length`."""
    edges = np.empty((max(m - 1, 0), 2), dtype=np.int64)
    if m <= 1:
        return edges
    key = np.empty(m)
    parent = np.full(m, -1, dtype=np.int64)
    used = np.zeros(m, dtype=np.bool_)
    for i in range(m):
        key[i] = np.inf
    key[0] = 0.0
    e = 0
    for _ in range(m):
        best = -1
        bv = np.inf
        for i in range(m):
            if not used[i] and key[i] < bv:
                bv = key[i]
                best = i
        used[best] = True
        if parent[best] >= 0:
            edges[e, 0] = parent[best]
            edges[e, 1] = best
            e += 1
        a = idx[best]
        for i in range(m):
            if not used[i]:
                v = D[a, idx[i]]
                if v < key[i]:
                    key[i] = v
                    parent[i] = best
    return edges
