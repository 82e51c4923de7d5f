"""Compiled loops for reductions numpy handles slowly on strided axes."""
from __future__ import annotations

from numba import njit


@njit(cache=True, fastmath=True)
def max_k_forward(x, out, idx):
    """Maximum over axis 1 of a (C, k, d) array; first maximal index wins."""
    c_n, k_n, d_n = x.shape
    for c in range(c_n):
        for f in range(d_n):
            out[c, f] = x[c, 0, f]
            idx[c, f] = 0
        for j in range(1, k_n):
            for f in range(d_n):
                v = x[c, j, f]
                if v > out[c, f]:
                    out[c, f] = v
                    idx[c, f] = j


@njit(cache=True, fastmath=True)
def max_k_backward(g, idx, gx):
    c_n, d_n = g.shape
    for c in range(c_n):
        for f in range(d_n):
            gx[c, idx[c, f], f] += g[c, f]


@njit(cache=True, fastmath=True)
def sum_k(x, out):
    """Sum over axis 1 of a (C, k, d) array in fixed index order."""
    c_n, k_n, d_n = x.shape
    for c in range(c_n):
        for f in range(d_n):
            out[c, f] = 0.0
        for j in range(k_n):
            for f in range(d_n):
                out[c, f] += x[c, j, f]


@njit(cache=True, fastmath=True)
def scatter_rows(g, index, out):
    """out[index[i]] += g[i] for 2-D ``g`` and ``out``, in row order."""
    n, d = g.shape
    for i in range(n):
        r = index[i]
        for f in range(d):
            out[r, f] += g[i, f]
