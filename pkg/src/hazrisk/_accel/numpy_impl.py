"""Pure numpy implementations of the hot inner sums.

Risk sets are suffixes of the time-sorted arrays, so every per-failure sum
is a reversed cumulative sum indexed at the failure's risk-set start.
"""

import numpy as np

NAME = "numpy"


def _suffix(a):
    out = np.zeros(a.shape[0] + 1)
    out[: a.shape[0]] = np.cumsum(a[::-1])[::-1]
    return out


def local_sums(theta, feats, wts, fail_feats, fail_wts, fail_ptr):
    """Local partial likelihood value, gradient and Hessian in theta.

    feats/wts: scaled features and kernel weights of the windowed subjects in
    time order; fail_*: the same for in-window failures; fail_ptr: index of
    the first windowed subject in each failure's risk set.
    """
    W, d = feats.shape
    e = wts * np.exp(feats @ theta)
    ef = e[:, None] * feats

    s0 = _suffix(e)
    s1 = np.zeros((W + 1, d))
    s1[:W] = np.cumsum(ef[::-1], axis=0)[::-1]
    outer = np.einsum("wa,wb->wab", ef, feats)
    s2 = np.zeros((W + 1, d, d))
    s2[:W] = np.cumsum(outer[::-1], axis=0)[::-1]

    S0 = s0[fail_ptr]
    S1 = s1[fail_ptr]
    S2 = s2[fail_ptr]
    m = S1 / S0[:, None]

    ll = float(np.sum(fail_wts * (fail_feats @ theta - np.log(S0))))
    grad = fail_wts @ (fail_feats - m)
    hc = S2 / S0[:, None, None] - np.einsum("fa,fb->fab", m, m)
    hess = -np.einsum("f,fab->ab", fail_wts, hc)
    return ll, grad, hess


def pair_suffix(a, b, ptr):
    """Risk-set suffix sums of two per-subject arrays at the given starts."""
    return _suffix(a)[ptr], _suffix(b)[ptr]


def risk_ratio_sum(ed, k1ed, k2ed, ptr):
    """Sum over failures of T1*T2 / (T0*(T1+T2)), skipping one-sided terms."""
    T0 = _suffix(ed)[ptr]
    T1 = _suffix(k1ed)[ptr]
    T2 = _suffix(k2ed)[ptr]
    mask = (T1 > 0.0) & (T2 > 0.0)
    if not np.any(mask):
        return 0.0
    T0m, T1m, T2m = T0[mask], T1[mask], T2[mask]
    return float(np.sum(T1m * T2m / (T0m * (T1m + T2m))))
