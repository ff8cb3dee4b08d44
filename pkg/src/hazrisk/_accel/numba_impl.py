"""Numba implementations of the hot inner sums (see numpy_impl for contracts)."""

import numpy as np
from numba import njit

NAME = "numba"

# cache=True persists compiled kernels next to this module; nogil lets
# replications run on a thread pool without serializing on the interpreter.
_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def local_sums(theta, feats, wts, fail_feats, fail_wts, fail_ptr):
    W, d = feats.shape
    F = fail_ptr.shape[0]
    s0 = np.zeros(W + 1)
    s1 = np.zeros((W + 1, d))
    s2 = np.zeros((W + 1, d, d))
    for w in range(W - 1, -1, -1):
        t = 0.0
        for a in range(d):
            t += feats[w, a] * theta[a]
        ew = wts[w] * np.exp(t)
        s0[w] = s0[w + 1] + ew
        for a in range(d):
            efa = ew * feats[w, a]
            s1[w, a] = s1[w + 1, a] + efa
            for b in range(d):
                s2[w, a, b] = s2[w + 1, a, b] + efa * feats[w, b]

    ll = 0.0
    grad = np.zeros(d)
    hess = np.zeros((d, d))
    for f in range(F):
        p = fail_ptr[f]
        fw = fail_wts[f]
        S0 = s0[p]
        tf = 0.0
        for a in range(d):
            tf += fail_feats[f, a] * theta[a]
        ll += fw * (tf - np.log(S0))
        for a in range(d):
            ma = s1[p, a] / S0
            grad[a] += fw * (fail_feats[f, a] - ma)
            for b in range(d):
                hess[a, b] -= fw * (s2[p, a, b] / S0 - ma * (s1[p, b] / S0))
    return ll, grad, hess


@njit(**_JIT)
def pair_suffix(a, b, ptr):
    n = a.shape[0]
    sa = np.zeros(n + 1)
    sb = np.zeros(n + 1)
    for i in range(n - 1, -1, -1):
        sa[i] = sa[i + 1] + a[i]
        sb[i] = sb[i + 1] + b[i]
    F = ptr.shape[0]
    A = np.empty(F)
    B = np.empty(F)
    for f in range(F):
        A[f] = sa[ptr[f]]
        B[f] = sb[ptr[f]]
    return A, B


@njit(**_JIT)
def risk_ratio_sum(ed, k1ed, k2ed, ptr):
    n = ed.shape[0]
    t0 = np.zeros(n + 1)
    t1 = np.zeros(n + 1)
    t2 = np.zeros(n + 1)
    for i in range(n - 1, -1, -1):
        t0[i] = t0[i + 1] + ed[i]
        t1[i] = t1[i + 1] + k1ed[i]
        t2[i] = t2[i + 1] + k2ed[i]
    total = 0.0
    for f in range(ptr.shape[0]):
        p = ptr[f]
        T1 = t1[p]
        T2 = t2[p]
        if T1 > 0.0 and T2 > 0.0:
            total += T1 * T2 / (t0[p] * (T1 + T2))
    return total
