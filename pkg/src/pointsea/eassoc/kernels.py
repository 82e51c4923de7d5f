"""Fused loops for weighted sums of essential associations.

Every kernel works on node values laid out as (centres, k, width) and on a
five-column weight row ordered e1..e5.  Outputs and gradients accumulate in
place so several edges feeding one node share a buffer.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

# full fast-math roughly halves the backward time; non-finite losses are caught
# at the optimiser step, not inside these loops
FAST = True


@njit(cache=True, fastmath=FAST, error_model="numpy")
def mix_forward(a, b, mb, w, out):
    c_n, k_n, d_n = a.shape
    w1, w2, w3, w4, w5 = w[0], w[1], w[2], w[3], w[4]
    for c in range(c_n):
        for j in range(k_n):
            r2 = 0.0
            for f in range(d_n):
                t = a[c, j, f] - b[c, j, f]
                r2 += t * t
            r = math.sqrt(r2)
            for f in range(d_n):
                av = a[c, j, f]
                bv = b[c, j, f]
                out[c, j, f] += (w1 * av + w2 * bv + w3 * (av - bv) + w4 * r
                                 + w5 * (av - mb[c, f]))


@njit(cache=True, fastmath=FAST, error_model="numpy")
def mix_backward(a, b, mb, w, g, ga, gb, gw, need_w):
    c_n, k_n, d_n = a.shape
    w1, w2, w3, w4, w5 = w[0], w[1], w[2], w[3], w[4]
    ca = w1 + w3 + w5
    cb = w2 - w3
    inv_k = 1.0 / k_n
    gmb = np.zeros(d_n)
    s1 = 0.0
    s2 = 0.0
    s3 = 0.0
    s4 = 0.0
    s5 = 0.0
    for c in range(c_n):
        for f in range(d_n):
            gmb[f] = 0.0
        for j in range(k_n):
            r2 = 0.0
            gsum = 0.0
            for f in range(d_n):
                t = a[c, j, f] - b[c, j, f]
                r2 += t * t
                gsum += g[c, j, f]
            r = math.sqrt(r2)
            s = w4 * gsum / r if r > 0.0 else 0.0
            for f in range(d_n):
                gv = g[c, j, f]
                av = a[c, j, f]
                bv = b[c, j, f]
                t = av - bv
                ga[c, j, f] += ca * gv + s * t
                gb[c, j, f] += cb * gv - s * t
                gmb[f] += gv
                if need_w:
                    s1 += gv * av
                    s2 += gv * bv
                    s5 += gv * (av - mb[c, f])
            s4 += gsum * r
        if w5 == 0.0:
            continue
        # e5 reads the neighbourhood mean of b: spread its gradient back over k
        for f in range(d_n):
            gmb[f] *= w5 * inv_k
        for j in range(k_n):
            for f in range(d_n):
                gb[c, j, f] -= gmb[f]
    if need_w:
        gw[0] += s1
        gw[1] += s2
        gw[2] += s1 - s2
        gw[3] += s4
        gw[4] += s5


BLOCK = 64  # centres per block; a block's node buffers stay in L2


@njit(cache=True, fastmath=FAST)
def _block_means(xm, mu, nb_c, k_n, d_n, inv_k):
    for cc in range(nb_c):
        for f in range(d_n):
            mu[cc * d_n + f] = 0.0
        for j in range(k_n):
            base = (cc * k_n + j) * d_n
            for f in range(d_n):
                mu[cc * d_n + f] += xm[base + f]
        for f in range(d_n):
            mu[cc * d_n + f] *= inv_k


@njit(cache=True, fastmath=FAST)
def level_forward(n0, n1, w, pa, pb, pt, hidden):
    """Evaluate every computed node of one DAG level.

    Pairs are listed in ascending target order; node ``t`` (t >= 2) lands in
    ``hidden[:, :, (t-2)*d:(t-1)*d]``.  Centres are processed in blocks with
    flat node buffers so the inner loops are long and cache resident.
    """
    c_n, k_n, d_n = n0.shape
    p_n = pa.shape[0]
    m_n = hidden.shape[2] // d_n + 2
    h_w = hidden.shape[2]
    kd = k_n * d_n
    x = np.empty((m_n, BLOCK * kd))
    mu = np.empty((m_n, BLOCK * d_n))
    r = np.empty(BLOCK * k_n)
    done = np.zeros(m_n, dtype=np.bool_)
    inv_k = 1.0 / k_n
    f0 = n0.reshape(c_n * kd)
    f1 = n1.reshape(c_n * kd)
    for c0 in range(0, c_n, BLOCK):
        nb_c = min(BLOCK, c_n - c0)
        e_n = nb_c * kd
        for e in range(e_n):
            x[0, e] = f0[c0 * kd + e]
            x[1, e] = f1[c0 * kd + e]
        for m in range(2, m_n):
            for e in range(e_n):
                x[m, e] = 0.0
        for m in range(m_n):
            done[m] = False
        for p in range(p_n):
            a = pa[p]
            b = pb[p]
            t = pt[p]
            w4, w5 = w[p, 3], w[p, 4]
            ca = w[p, 0] + w[p, 2] + w5
            cb = w[p, 1] - w[p, 2]
            xa = x[a]
            xb = x[b]
            xt = x[t]
            for e in range(e_n):
                xt[e] += ca * xa[e] + cb * xb[e]
            if w4 != 0.0:
                for q in range(nb_c * k_n):
                    r2 = 0.0
                    for f in range(d_n):
                        dq = xa[q * d_n + f] - xb[q * d_n + f]
                        r2 += dq * dq
                    r[q] = math.sqrt(r2)
                for q in range(nb_c * k_n):
                    v = w4 * r[q]
                    for f in range(d_n):
                        xt[q * d_n + f] += v
            if w5 != 0.0:
                if not done[b]:
                    _block_means(xb, mu[b], nb_c, k_n, d_n, inv_k)
                    done[b] = True
                mb = mu[b]
                for cc in range(nb_c):
                    for j in range(k_n):
                        base = (cc * k_n + j) * d_n
                        for f in range(d_n):
                            xt[base + f] -= w5 * mb[cc * d_n + f]
        for cc in range(nb_c):
            for j in range(k_n):
                src = (cc * k_n + j) * d_n
                for m in range(2, m_n):
                    off = (m - 2) * d_n
                    for f in range(d_n):
                        hidden[c0 + cc, j, off + f] = x[m, src + f]


@njit(cache=True, fastmath=FAST)
def level_backward(n0, n1, hidden, w, pa, pb, pt, gh, g0, g1, gw, need_w):
    c_n, k_n, d_n = n0.shape
    p_n = pa.shape[0]
    m_n = hidden.shape[2] // d_n + 2
    kd = k_n * d_n
    x = np.empty((m_n, BLOCK * kd))
    gx = np.empty((m_n, BLOCK * kd))
    mu = np.empty((m_n, BLOCK * d_n))
    gsum = np.empty(BLOCK * d_n)
    r = np.empty(BLOCK * k_n)
    gs = np.empty(BLOCK * k_n)
    acc = np.zeros((p_n, 5))
    inv_k = 1.0 / k_n
    f0 = n0.reshape(c_n * kd)
    f1 = n1.reshape(c_n * kd)
    o0 = g0.reshape(c_n * kd)
    o1 = g1.reshape(c_n * kd)
    for c0 in range(0, c_n, BLOCK):
        nb_c = min(BLOCK, c_n - c0)
        e_n = nb_c * kd
        for e in range(e_n):
            x[0, e] = f0[c0 * kd + e]
            x[1, e] = f1[c0 * kd + e]
            gx[0, e] = 0.0
            gx[1, e] = 0.0
        for cc in range(nb_c):
            for j in range(k_n):
                dst = (cc * k_n + j) * d_n
                for m in range(2, m_n):
                    off = (m - 2) * d_n
                    for f in range(d_n):
                        x[m, dst + f] = hidden[c0 + cc, j, off + f]
                        gx[m, dst + f] = gh[c0 + cc, j, off + f]
        for p in range(p_n - 1, -1, -1):
            a = pa[p]
            b = pb[p]
            t = pt[p]
            w4, w5 = w[p, 3], w[p, 4]
            ca = w[p, 0] + w[p, 2] + w5
            cb = w[p, 1] - w[p, 2]
            xa = x[a]
            xb = x[b]
            ga = gx[a]
            gb = gx[b]
            gt = gx[t]
            s0 = 0.0
            s1 = 0.0
            for e in range(e_n):
                gv = gt[e]
                ga[e] += ca * gv
                gb[e] += cb * gv
                s0 += gv * xa[e]
                s1 += gv * xb[e]
            if w4 != 0.0 or need_w:
                s3 = 0.0
                for q in range(nb_c * k_n):
                    r2 = 0.0
                    g_q = 0.0
                    for f in range(d_n):
                        dq = xa[q * d_n + f] - xb[q * d_n + f]
                        r2 += dq * dq
                        g_q += gt[q * d_n + f]
                    r[q] = math.sqrt(r2)
                    gs[q] = g_q
                    s3 += g_q * r[q]
                acc[p, 3] += s3
                if w4 != 0.0:
                    for q in range(nb_c * k_n):
                        sq = w4 * gs[q] / r[q] if r[q] > 0.0 else 0.0
                        for f in range(d_n):
                            dq = xa[q * d_n + f] - xb[q * d_n + f]
                            ga[q * d_n + f] += sq * dq
                            gb[q * d_n + f] -= sq * dq
            if w5 != 0.0 or need_w:
                for cc in range(nb_c):
                    for f in range(d_n):
                        gsum[cc * d_n + f] = 0.0
                    for j in range(k_n):
                        base = (cc * k_n + j) * d_n
                        for f in range(d_n):
                            gsum[cc * d_n + f] += gt[base + f]
                if w5 != 0.0:
                    for cc in range(nb_c):
                        for j in range(k_n):
                            base = (cc * k_n + j) * d_n
                            for f in range(d_n):
                                gb[base + f] -= w5 * inv_k * gsum[cc * d_n + f]
                if need_w:
                    # sum g*(a - mu_b) = sum g*a - sum_f mu_b[f] * sum_j g[j, f]
                    _block_means(xb, mu[b], nb_c, k_n, d_n, inv_k)
                    cross = 0.0
                    for i in range(nb_c * d_n):
                        cross += mu[b, i] * gsum[i]
                    acc[p, 4] += s0 - cross
            acc[p, 0] += s0
            acc[p, 1] += s1
        for e in range(e_n):
            o0[c0 * kd + e] += gx[0, e]
            o1[c0 * kd + e] += gx[1, e]
    if need_w:
        for p in range(p_n):
            gw[p, 0] += acc[p, 0]
            gw[p, 1] += acc[p, 1]
            gw[p, 2] += acc[p, 0] - acc[p, 1]
            gw[p, 3] += acc[p, 3]
            gw[p, 4] += acc[p, 4]
