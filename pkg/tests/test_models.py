import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from longmem_lab.errors import ConfigurationError, DomainError, EstimationError
from longmem_lab.linproc import Innovation, LinearProcessSpec, process_sigma_n, simulate_linear_process
from longmem_lab.models import (ModelFit, RegressionSpec, WeightFunction, compute_Rn, expand_charpoly, ols_ar,
                                ols_regression, simulate_regression, simulate_unstable_ar, weight_coeffs,
                                weighted_lse)


# characteristic polynomials

def test_charpoly_examples():
    np.testing.assert_array_equal(expand_charpoly(1, 0).phi, [1.0])
    np.testing.assert_array_equal(expand_charpoly(1, 1).phi, [0.0, 1.0])
    np.testing.assert_allclose(expand_charpoly(0, 0, [(math.pi / 2, 1)]).phi, [0.0, -1.0], atol=1e-15)


def test_charpoly_errors():
    with pytest.raises(DomainError):
        expand_charpoly(0, 0)
    with pytest.raises(DomainError):
        expand_charpoly(0, 0, [(math.pi, 1)])
    with pytest.raises(DomainError):
        expand_charpoly(0, 0, [(0.0, 1)])
    with pytest.raises(DomainError):
        expand_charpoly(-1, 0)


def _rational_expand(a, b, pairs_cos):
    c = [Fraction(1)]

    def mul(c, f):
        out = [Fraction(0)] * (len(c) + len(f) - 1)
        for i, u in enumerate(c):
            for j, v in enumerate(f):
                out[i + j] += u * v
        return out

    for _ in range(a):
        c = mul(c, [Fraction(1), Fraction(-1)])
    for _ in range(b):
        c = mul(c, [Fraction(1), Fraction(1)])
    for cs, d in pairs_cos:
        for _ in range(d):
            c = mul(c, [Fraction(1), -2 * cs, Fraction(1)])
    return c


@pytest.mark.parametrize("a,b,pairs", [(2, 1, []), (1, 0, [(1 / 3, 1)]), (0, 2, [(2 * math.pi / 3, 2)]),
                                       (3, 3, [])])
def test_charpoly_matches_rational_expansion(a, b, pairs):
    # angles with rational cosines: pi/3 -> 1/2, 2pi/3 -> -1/2
    cos_map = {1 / 3: Fraction(1, 2), 2 * math.pi / 3: Fraction(-1, 2)}
    thetas = [(math.pi / 3 if t == 1 / 3 else t, d) for t, d in pairs]
    exact = _rational_expand(a, b, [(cos_map[t], d) for t, d in pairs])
    cp = expand_charpoly(a, b, thetas)
    np.testing.assert_allclose(cp.poly, [float(v) for v in exact], atol=1e-13)
    assert cp.p == a + b + 2 * sum(d for _, d in pairs)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 3), st.integers(0, 3),
       st.lists(st.tuples(st.floats(0.2, math.pi - 0.2), st.integers(1, 2)), max_size=1))
def test_charpoly_roots(a, b, pairs):
    if a + b + 2 * sum(d for _, d in pairs) == 0 or a + b + 2 * sum(d for _, d in pairs) > 8:
        return
    cp = expand_charpoly(a, b, pairs)
    tol = 1e-12
    assert (abs(cp(1.0)) < tol) == (a >= 1)
    assert (abs(cp(-1.0)) < tol) == (b >= 1)
    for theta, _ in pairs:
        assert abs(cp(np.exp(1j * theta))) < tol


# AR simulation and fitting

def test_simulate_ar_examples():
    np.testing.assert_array_equal(simulate_unstable_ar(expand_charpoly(1, 0), np.zeros(6), [5.0]), np.full(6, 5.0))
    np.testing.assert_array_equal(simulate_unstable_ar([0.5], np.zeros(5), [1.0]), 0.5 ** np.arange(1, 6))


def test_random_walk_differences_recover_noise():
    eps = simulate_linear_process(LinearProcessSpec(kind="iid"), 500, seed=3)
    y = simulate_unstable_ar(expand_charpoly(1, 0), eps, [0.0])
    np.testing.assert_allclose(np.diff(np.concatenate([[0.0], y])), eps.values, rtol=0, atol=1e-12)


def test_simulate_ar_init_length():
    with pytest.raises(DomainError):
        simulate_unstable_ar([1.0, 0.0], np.zeros(4), [1.0])


def test_ar_p2_against_loop():
    phi = np.array([0.3, -0.2])
    eps = np.random.default_rng(1).standard_normal(50)
    y = simulate_unstable_ar(phi, eps, [0.5, -1.0])
    prev = [0.5, -1.0]
    ref = []
    for e in eps:
        v = phi[0] * prev[-1] + phi[1] * prev[-2] + e
        ref.append(v)
        prev.append(v)
    np.testing.assert_allclose(y, ref, rtol=1e-13, atol=1e-13)


def test_ols_ar_noiseless_geometric():
    y = 0.5 ** np.arange(1, 30)
    fit = ols_ar(y, 1)
    assert fit.beta_hat[0] == pytest.approx(0.5, abs=1e-14)
    assert np.max(np.abs(fit.residuals)) < 1e-15
    assert fit.model == "AR_LSE"


def test_ols_ar_singular():
    with pytest.raises(EstimationError, match="smallest singular value"):
        ols_ar(np.zeros(50), 1)
    with pytest.raises(DomainError):
        ols_ar(np.ones(2), 2)


def test_residual_identity_exact():
    rng = np.random.default_rng(5)
    y = np.cumsum(rng.standard_normal(200))
    for fit in (ols_ar(y, 2), ols_ar(y, 1, init=[0.0])):
        np.testing.assert_array_equal(fit.response - fit.design @ fit.beta_hat - fit.residuals, 0.0)


@pytest.mark.slow
def test_unit_root_superconsistency():
    spec = LinearProcessSpec(kind="hyperbolic", H=0.75)
    spread = {}
    for n in (2048, 4096):
        z = []
        for r in range(500):
            eps = simulate_linear_process(spec, n, seed=21, rep=r).values
            y = simulate_unstable_ar([1.0], eps, [0.0])
            z.append(n * (ols_ar(y, 1, init=[0.0]).beta_hat[0] - 1))
        q = np.quantile(z, [0.025, 0.975])
        spread[n] = q[1] - q[0]
    assert spread[4096] < 1.5 * spread[2048] and spread[2048] < 1.5 * spread[4096]
    assert spread[4096] < 50


@pytest.mark.slow
def test_stationary_ar_root_n_rate():
    rmse = {}
    for n in (2048, 8192):
        err = []
        for r in range(400):
            eps = simulate_linear_process(LinearProcessSpec(kind="iid"), n, seed=22, rep=r).values
            y = simulate_unstable_ar([0.5], eps, [0.0])
            err.append(ols_ar(y, 1, init=[0.0]).beta_hat[0] - 0.5)
        rmse[n] = math.sqrt(np.mean(np.square(err)))
    assert rmse[2048] / rmse[8192] == pytest.approx(2.0, rel=0.25)


# regression

def test_simulate_regression_examples():
    noise = LinearProcessSpec(kind="iid")
    eps = simulate_linear_process(noise, 50, seed=4).values
    y, x = simulate_regression(RegressionSpec(alpha0=2.0, alpha=(), noise=noise), 50, seed=4)
    np.testing.assert_array_equal(y, 2.0 + eps)
    assert x.shape == (50, 0)
    y, x = simulate_regression(RegressionSpec(alpha0=1.0, alpha=(3.0,), regressor="constant", noise=noise), 50, 4)
    np.testing.assert_array_equal(y, 1.0 + eps)


def test_exact_linear_relation():
    spec = RegressionSpec(alpha0=1.0, alpha=(2.0,), noise=LinearProcessSpec(kind="iid", innovation=Innovation("zero")))
    y, x = simulate_regression(spec, 100, seed=9)
    fit = ols_regression(y, x)
    np.testing.assert_allclose(fit.beta_hat, [1.0, 2.0], atol=1e-13)
    assert np.max(np.abs(fit.residuals)) < 1e-13
    assert fit.info["alpha0_hat"] == pytest.approx(1.0)


def test_regressor_and_noise_streams_independent():
    base = RegressionSpec(alpha0=0.0, alpha=(1.0,), noise=LinearProcessSpec(kind="iid"))
    _, x1, e1 = simulate_regression(base, 64, seed=1, return_noise=True)
    alt = RegressionSpec(alpha0=0.0, alpha=(1.0,), noise=LinearProcessSpec(kind="fgn", H=0.8))
    _, x2, e2 = simulate_regression(alt, 64, seed=1, return_noise=True)
    np.testing.assert_array_equal(x1, x2)
    assert not np.array_equal(e1, e2)


def test_ar1_regressor_is_stationary():
    spec = RegressionSpec(alpha=(1.0, 1.0), regressor="ar1", rho=0.8, noise=LinearProcessSpec(kind="iid"))
    _, x = simulate_regression(spec, 40_000, seed=2)
    assert x.shape == (40_000, 2)
    assert np.var(x[:, 0]) == pytest.approx(1.0, abs=0.1)
    assert np.corrcoef(x[:-1, 0], x[1:, 0])[0, 1] == pytest.approx(0.8, abs=0.02)


def test_regression_spec_validation():
    with pytest.raises(ConfigurationError):
        RegressionSpec(regressor="walk")
    with pytest.raises(ConfigurationError):
        RegressionSpec(regressor="ar1", rho=1.0)


# weights

def test_weight_constant_one():
    for method in ("quad", "fft"):
        w = weight_coeffs(WeightFunction.constant_one(), 3, method=method)
        np.testing.assert_allclose(w.coeffs[:4], [1 / (2 * math.pi), 0, 0, 0], atol=1e-10)


def test_weight_cosine():
    w = weight_coeffs(WeightFunction.from_callable("cos", lambda l: 2 * np.cos(l)), 2, method="quad")
    np.testing.assert_allclose(w.coeffs, [0.0, 1 / (2 * math.pi), 0.0], atol=1e-10)


def test_weight_quad_fft_agree():
    ti = WeightFunction.truncated_inverse_spectrum(0.25, floor=1e-3)
    a = weight_coeffs(ti, 40, method="quad").coeffs
    b = weight_coeffs(ti, 40, method="fft").coeffs[:41]
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-8)
    assert np.isfinite(np.abs(b).sum())


def test_weight_not_even():
    with pytest.raises(ConfigurationError, match="not even"):
        weight_coeffs(WeightFunction.from_callable("odd", np.sin), 3)


def test_weight_floor_active_for_negative_d():
    w = WeightFunction.truncated_inverse_spectrum(-0.4, floor=0.05)
    # spectrum vanishes at 0 for d < 0, so the floor caps the weight there
    assert w.phi(np.array([1e-9]))[0] == pytest.approx(1 / 0.05)


# weighted LSE

def _data(n, q, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, q)) + rng.uniform(-2, 2, q)
    y = 0.7 + x @ rng.standard_normal(q) + rng.standard_normal(n)
    return y, x


@settings(max_examples=25, deadline=None)
@given(st.integers(8, 512), st.integers(1, 3), st.integers(0, 10**6))
def test_weighted_constant_one_equals_demeaned_ols(n, q, seed):
    y, x = _data(n, q, seed)
    w = weighted_lse(y, x, WeightFunction.constant_one())
    o = ols_regression(y, x)
    np.testing.assert_allclose(w.beta_hat, o.beta_hat, rtol=1e-10, atol=1e-10 * np.abs(o.beta_hat).max())


@pytest.mark.parametrize("n", [16, 257, 1024])
def test_weighted_fast_matches_direct(n):
    y, x = _data(n, 2, n)
    ti = WeightFunction.truncated_inverse_spectrum(0.3)
    a = weighted_lse(y, x, ti, method="fft")
    b = weighted_lse(y, x, ti, method="direct")
    assert np.max(np.abs(a.beta_hat - b.beta_hat)) <= 1e-8 * np.max(np.abs(b.beta_hat))


def test_weighted_exact_data():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((300, 2))
    y = -1.0 + x @ [0.5, 2.0]
    fit = weighted_lse(y, x, WeightFunction.truncated_inverse_spectrum(0.25))
    np.testing.assert_allclose(fit.beta_hat, [-1.0, 0.5, 2.0], atol=1e-12)
    assert np.max(np.abs(fit.residuals)) < 1e-12
    np.testing.assert_array_equal(fit.response - fit.design @ fit.beta_hat - fit.residuals, 0.0)


def test_weighted_singular():
    with pytest.raises(EstimationError):
        weighted_lse(np.arange(10.0), np.ones((10, 1)), WeightFunction.constant_one())


@pytest.mark.slow
def test_weighted_root_n_spread_stable():
    spec = RegressionSpec(alpha0=1.0, alpha=(2.0,), noise=LinearProcessSpec(kind="hyperbolic", H=0.75))
    ti = WeightFunction.truncated_inverse_spectrum(0.25)
    spread = {}
    for n in (2048, 4096):
        w = weight_coeffs(ti, n - 1)
        z = [math.sqrt(n) * (weighted_lse(*simulate_regression(spec, n, 31, r), w).beta_hat[1] - 2.0)
             for r in range(300)]
        spread[n] = np.std(z)
    assert 0.7 < spread[4096] / spread[2048] < 1.4


# R_n

def test_compute_rn_examples():
    X = np.array([[1.0, 3.0], [2.0, 4.0]])
    assert compute_Rn(np.array([1.0, 2.0]), [1.0, 2.0], X, 1.0) == 0.0
    assert compute_Rn(np.array([2.0, 0.0]), [1.0, 0.0], np.array([3.0, 7.0]), 3.0) == 1.0
    with pytest.raises(DomainError):
        compute_Rn(np.array([1.0]), [1.0], np.ones((3, 1)), 0.0)
    with pytest.raises(DomainError):
        compute_Rn(np.array([1.0, 2.0]), [1.0], np.ones((3, 2)), 1.0)


def test_rn_with_intercept_equals_normalized_noise_sum():
    spec = RegressionSpec(alpha0=1.0, alpha=(2.0,), noise=LinearProcessSpec(kind="hyperbolic", H=0.75))
    y, x, eps = simulate_regression(spec, 1000, 5, return_noise=True)
    fit = ols_regression(y, x)
    s = process_sigma_n(spec.noise, 1000)
    # OLS residuals with an intercept sum to zero, so sum X_t'(beta_hat - beta) = sum eps_t
    assert compute_Rn(fit, spec.beta, sigma_n=s) == pytest.approx(eps.sum() / s, rel=1e-9)


def test_fit_report():
    fit = ols_regression(np.arange(5.0) + 1.0, np.arange(5.0))
    rep = fit.report(sigma_n=2.0)
    assert rep["model"] == "REGRESSION_OLS" and rep["alpha0_hat"] == pytest.approx(1.0)
    assert isinstance(fit, ModelFit)
