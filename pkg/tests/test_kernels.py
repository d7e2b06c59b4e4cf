import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from longmem_lab import kernels

PY = kernels.load_backend("python")
try:
    CY = kernels.load_backend("cython")
except ImportError:  # extension not built
    CY = None

needs_cython = pytest.mark.skipif(CY is None, reason="compiled kernels not built")


def _sorted(rng, n, ties=False):
    x = rng.integers(0, max(1, n // 3), n).astype(float) if ties else rng.standard_normal(n)
    return np.sort(x)


@needs_cython
@settings(max_examples=50, deadline=None)
@given(st.integers(1, 300), st.integers(0, 10**6), st.booleans())
def test_step_process_agrees(n, seed, ties):
    rng = np.random.default_rng(seed)
    s = _sorted(rng, n, ties)
    F = np.clip(0.5 + 0.1 * s, 0, 1)
    for a, b in zip(PY.step_process(s, F, 3.0), CY.step_process(s, F, 3.0)):
        np.testing.assert_array_equal(a, b)


@needs_cython
@settings(max_examples=50, deadline=None)
@given(st.integers(1, 200), st.integers(1, 200), st.integers(0, 10**6), st.booleans())
def test_merge_and_ks_agree(n, m, seed, ties):
    rng = np.random.default_rng(seed)
    s, x = _sorted(rng, n, ties), _sorted(rng, m, ties)
    for a, b in zip(PY.merge_counts(s, x), CY.merge_counts(s, x)):
        np.testing.assert_array_equal(a, b)
    assert PY.two_sample_ks(s, x) == CY.two_sample_ks(s, x)


@needs_cython
@pytest.mark.parametrize("p", [1, 2, 5])
def test_ar_recursion_agrees(p):
    rng = np.random.default_rng(p)
    phi = 0.9 * rng.uniform(-1, 1, p) / p
    eps, init = rng.standard_normal(2000), rng.standard_normal(p)
    a, b = PY.ar_recursion(phi, eps, init), CY.ar_recursion(phi, eps, init)
    if p == 1:
        np.testing.assert_array_equal(a, b)
    else:
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_merge_counts_semantics():
    le, lt = kernels.merge_counts([1.0, 2.0, 2.0, 3.0], [0.0, 2.0, 5.0])
    np.testing.assert_array_equal(le, [0, 3, 4])
    np.testing.assert_array_equal(lt, [0, 1, 4])


def test_step_process_values():
    right, left, sup = kernels.step_process([0.0, 0.0], [0.5, 0.5], 1.0)
    np.testing.assert_array_equal(right, [1.0, 1.0])
    np.testing.assert_array_equal(left, [-1.0, -1.0])
    assert sup == 1.0


def test_pure_python_switch():
    code = "from longmem_lab import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, LONGMEM_LAB_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.load_backend("fortran")
