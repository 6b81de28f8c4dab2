"""Compiled inner loops (numba). Reductions run in a fixed order so results
are reproducible bit for bit."""
from __future__ import annotations

import math

import numpy as np
import os

import numba
from numba import njit, prange

if "NUMBA_THREADING_LAYER" not in os.environ:
    # the bundled TBB is too old for numba; pick a layer that needs no extra library
    numba.config.THREADING_LAYER = "workqueue"


@njit(cache=True)
def ula_linear(theta, P, mu, delta, Z, out):
    d = theta.shape[0]
    half = 0.5 * delta
    sq = math.sqrt(delta)
    th = theta.copy()
    g = np.empty(d)
    for k in range(Z.shape[0]):
        for i in range(d):
            acc = 0.0
            for j in range(d):
                acc += P[i, j] * (th[j] - mu[j])
            g[i] = -acc
        for i in range(d):
            th[i] = th[i] + half * g[i] + sq * Z[k, i]
            out[k, i] = th[i]
    return th


@njit(cache=True)
def linear_inverse_arr(a, b, w):
    n = a.shape[0]
    out = np.empty(n)
    for k in range(n):
        ak, bk, wk = a[k], b[k], w[k]
        r = math.inf
        if bk > 0:
            if ak >= 0:
                r = 2.0 * wk / (ak + math.sqrt(max(ak * ak + 2.0 * wk * bk, 0.0)))
            else:
                r = -ak / bk + math.sqrt(2.0 * wk / bk)
        elif bk == 0:
            if ak > 0:
                r = wk / ak
        elif ak > 0 and wk < ak * ak / (-2.0 * bk):
            r = 2.0 * wk / (ak + math.sqrt(max(ak * ak + 2.0 * wk * bk, 0.0)))
        out[k] = r
    return out


@njit(cache=True)
def linear_mass_arr(a, b, tau):
    n = a.shape[0]
    out = np.zeros(n)
    if tau <= 0:
        return out
    for k in range(n):
        ak, bk = a[k], b[k]
        lo, hi = 0.0, tau
        if bk > 0:
            lo = min(max(-ak / bk, 0.0), tau)
        elif bk < 0:
            hi = min(max(-ak / bk, 0.0), tau)
        elif ak <= 0:
            hi = 0.0
        if hi > lo:
            out[k] = max((hi - lo) * (ak + bk * 0.5 * (lo + hi)), 0.0)
    return out


@njit(cache=True, inline="always")
def _imq_stein(xi, xj, gi, gj, A, trA, beta):
    d = xi.shape[0]
    q = 1.0
    ar_s = 0.0
    ar2 = 0.0
    ss = 0.0
    for a in range(d):
        ara = 0.0
        for b in range(d):
            ara += A[a, b] * (xi[b] - xj[b])
        q += (xi[a] - xj[a]) * ara
        ar2 += ara * ara
        ar_s += ara * (gi[a] - gj[a])
        ss += gi[a] * gj[a]
    if beta == 0.5:
        p0 = 1.0 / math.sqrt(q)
        p1 = p0 / q
    else:
        p1 = q ** (-beta - 1.0)
        p0 = p1 * q
    p2 = p1 / q
    return (2.0 * beta * trA * p1 - 4.0 * beta * (beta + 1.0) * ar2 * p2
            + 2.0 * beta * p1 * ar_s + p0 * ss)


@njit(parallel=True, cache=True)
def imq_stein_rowsums(X, G, A, beta, w):
    """Row terms of ``sum_ij w_i w_j k(x_i, x_j)`` using symmetry: row i holds
    ``w_i (w_i k_ii + 2 sum_{j>i} w_j k_ij)``, each summed in index order."""
    n = X.shape[0]
    trA = 0.0
    for a in range(A.shape[0]):
        trA += A[a, a]
    out = np.zeros(n)
    for i in prange(n):
        acc = 0.5 * w[i] * _imq_stein(X[i], X[i], G[i], G[i], A, trA, beta)
        for j in range(i + 1, n):
            acc += w[j] * _imq_stein(X[i], X[j], G[i], G[j], A, trA, beta)
        out[i] = 2.0 * w[i] * acc
    return out


@njit(parallel=True, cache=True)
def imq_stein_block(X, Y, GX, GY, A, beta):
    n = X.shape[0]
    m = Y.shape[0]
    trA = 0.0
    for a in range(A.shape[0]):
        trA += A[a, a]
    out = np.empty((n, m))
    for i in prange(n):
        for j in range(m):
            out[i, j] = _imq_stein(X[i], Y[j], GX[i], GY[j], A, trA, beta)
    return out
