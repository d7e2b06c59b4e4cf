"""Numpy implementations of the compiled kernels (same signatures, same rounding)."""
import numpy as np
from scipy import signal


def ar_recursion(phi, eps, init):
    phi = np.asarray(phi, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    init = np.asarray(init, dtype=np.float64)
    if phi.size == 1:
        # one multiply-add per step: identical rounding to the compiled loop
        if phi[0] == 1.0:
            return np.cumsum(np.concatenate([init, eps]))[1:]
        zi = phi[0] * init
        return signal.lfilter([1.0], [1.0, -phi[0]], eps, zi=zi)[0]
    a = np.concatenate([[1.0], -phi])
    zi = signal.lfiltic([1.0], a, init[::-1])
    return signal.lfilter([1.0], a, eps, zi=zi)[0]


def step_process(s, F, sigma_n):
    s = np.asarray(s, dtype=np.float64)
    F = np.asarray(F, dtype=np.float64)
    n = s.shape[0]
    nd = float(n)
    le = np.searchsorted(s, s, side="right").astype(np.float64)
    lt = np.searchsorted(s, s, side="left").astype(np.float64)
    right = (le - nd * F) / sigma_n
    left = (lt - nd * F) / sigma_n
    sup = 0.0
    if n:
        sup = float(max(np.abs(right).max(), np.abs(left).max()))
    return right, left, sup


def merge_counts(s, x):
    s = np.asarray(s, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    le = np.searchsorted(s, x, side="right").astype(np.int64)
    lt = np.searchsorted(s, x, side="left").astype(np.int64)
    return le, lt


def two_sample_ks(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = np.concatenate([x, y])
    fx = np.searchsorted(x, z, side="right").astype(np.float64) / float(x.size)
    fy = np.searchsorted(y, z, side="right").astype(np.float64) / float(y.size)
    return float(np.abs(fx - fy).max())
