"""Hot-loop dispatch: compiled Cython core when built, numpy fallback otherwise.

Set ``LONGMEM_LAB_PURE_PYTHON=1`` to force the fallback. Both backends take
sorted float64 arrays where noted and return identical results for the
step-process, merge and KS kernels; the AR recursion agrees bit-for-bit for
p = 1 and to rounding for p > 1.
"""
import os
from types import ModuleType

import numpy as np

from . import _kernels_py

__all__ = ["BACKEND", "load_backend", "ar_recursion", "step_process", "merge_counts", "two_sample_ks"]


def load_backend(name: str) -> ModuleType:
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")


def _select():
    if os.environ.get("LONGMEM_LAB_PURE_PYTHON", "") not in ("", "0"):
        return "python", _kernels_py
    try:
        return "cython", load_backend("cython")
    except ImportError:
        return "python", _kernels_py


BACKEND, _impl = _select()


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def ar_recursion(phi, eps, init):
    """``y_t = sum_i phi_i y_{t-i} + eps_t``; ``init`` is ``y_{1-p}, ..., y_0`` (oldest first)."""
    return _impl.ar_recursion(_f64(phi), _f64(eps), _f64(init))


def step_process(s, F, sigma_n):
    """Right values and left limits of ``(#{x_i <= s} - n F(s)) / sigma_n`` at sorted ``s``, plus the sup."""
    return _impl.step_process(_f64(s), _f64(F), float(sigma_n))


def merge_counts(s, x):
    """``(#{s <= x_k}, #{s < x_k})`` for sorted sample ``s`` and sorted points ``x``."""
    return _impl.merge_counts(_f64(s), _f64(x))


def two_sample_ks(x, y):
    """Sup-distance between the empirical CDFs of two sorted samples."""
    return float(_impl.two_sample_ks(_f64(x), _f64(y)))
