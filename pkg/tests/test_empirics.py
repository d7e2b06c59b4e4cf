import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from longmem_lab.errors import DomainError, EstimationError
from longmem_lab.linproc import (LinearProcessSpec, MarginalLaw, marginal_law, process_sigma_n,
                                simulate_linear_process)
from longmem_lab.empirics import (empirical_process, expansion_residual, linearization_remainder, ks_statistic_15,
                                  local_whittle_H, residual_process, stat_corollary31, stat_corollary41)
from longmem_lab.models import ols_regression

PHI = MarginalLaw.gaussian(1.0)


def _brute_sup(series, F, sigma_n, grid):
    s = np.sort(series)
    right = np.searchsorted(s, grid, side="right")
    left = np.searchsorted(s, grid, side="left")
    return max(np.abs(right - len(s) * F.cdf(grid)).max(), np.abs(left - len(s) * F.cdf(grid)).max()) / sigma_n


def test_zero_series_hand_values():
    p = empirical_process(np.zeros(4), PHI, math.sqrt(4))
    assert p.evaluate([0.0])[0] == 1.0
    assert p.evaluate([0.0], side="left")[0] == -1.0
    assert p.sup_abs == 1.0


def test_single_calibrated_point():
    p = empirical_process([0.0], PHI, 3.0)
    assert p.values[0] == pytest.approx(0.5 / 3.0)
    assert p.left[0] == pytest.approx(-0.5 / 3.0)
    assert p.sup_abs == pytest.approx(0.5 / 3.0)


def test_process_vanishes_at_infinity():
    p = empirical_process([0.3, -1.0], PHI, 1.0)
    np.testing.assert_array_equal(p.evaluate([-np.inf, np.inf]), [0.0, 0.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 60), st.integers(0, 10**6))
def test_sup_matches_fine_grid(n, seed):
    x = np.random.default_rng(seed).standard_normal(n)
    p = empirical_process(x, PHI, math.sqrt(n))
    grid = np.unique(np.concatenate([np.linspace(-6, 6, 100 * n * 20), x]))
    brute = _brute_sup(x, PHI, math.sqrt(n), grid)
    # the exact sup dominates any grid and is reached at the sample points
    assert p.sup_abs >= brute - 1e-12
    assert p.sup_abs == pytest.approx(brute, abs=1e-12)


def test_evaluate_unsorted_matches_sorted():
    x = np.random.default_rng(0).standard_normal(30)
    p = empirical_process(x, PHI, 2.0)
    q = np.array([0.5, -1.0, 2.0, 0.0])
    order = np.argsort(q)
    np.testing.assert_array_equal(p.evaluate(q)[order], p.evaluate(q[order]))


def test_empirical_process_errors():
    with pytest.raises(DomainError):
        empirical_process([], PHI, 1.0)
    with pytest.raises(DomainError):
        empirical_process([1.0], PHI, 0.0)
    with pytest.raises(DomainError):
        empirical_process([np.nan], PHI, 1.0)


def test_residual_process_equals_raw_when_beta_known():
    eps = simulate_linear_process(LinearProcessSpec(kind="hyperbolic", H=0.75), 300, seed=1).values
    a = empirical_process(eps, PHI, 7.0)
    b = residual_process(eps, PHI, 7.0)
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.left, b.left)
    assert a.sup_abs == b.sup_abs
    assert b.kind == "RESIDUAL"


def test_shift_change_of_variables():
    eps = np.random.default_rng(2).standard_normal(200)
    c = 0.37
    shifted = residual_process(eps + c, PHI, 10.0)
    x = np.linspace(-3, 3, 1001)
    counts = np.searchsorted(np.sort(eps), x - c, side="right")
    np.testing.assert_allclose(shifted.evaluate(x), (counts - 200 * PHI.cdf(x)) / 10.0, atol=1e-12)


# expansion residual

def test_expansion_zero_when_beta_known():
    eps = np.random.default_rng(3).standard_normal(100)
    raw = empirical_process(eps, PHI, 10.0)
    assert expansion_residual(raw, residual_process(eps, PHI, 10.0), 0.0, PHI) == 0.0


class _Shifted:
    """Synthetic process equal to ``raw + c F'``."""

    def __init__(self, raw, c):
        self.raw, self.c = raw, c
        self.eval_points, self.sigma_n, self.n = raw.eval_points, raw.sigma_n, raw.n

    def evaluate(self, x, side="right"):
        return self.raw.evaluate(x, side) + self.c * PHI.pdf(np.asarray(x))


def test_expansion_cancels_exact_shift():
    raw = empirical_process(np.random.default_rng(4).standard_normal(200), PHI, 5.0)
    assert expansion_residual(raw, _Shifted(raw, 0.8), 0.8, PHI) < 1e-10
    # a wrong R_n leaves |c - Rn| sup F'
    assert expansion_residual(raw, _Shifted(raw, 0.8), 0.3, PHI) == pytest.approx(0.5 * PHI.sup_pdf, rel=1e-12)


def test_expansion_mismatch_errors():
    eps = np.random.default_rng(5).standard_normal(10)
    with pytest.raises(DomainError):
        expansion_residual(empirical_process(eps, PHI, 1.0), empirical_process(eps, PHI, 2.0), 0.0, PHI)
    with pytest.raises(DomainError):
        expansion_residual(empirical_process(eps, PHI, 1.0), empirical_process(eps[:5], PHI, 1.0), 0.0, PHI)


def test_expansion_sup_matches_fine_grid():
    rng = np.random.default_rng(6)
    eps = rng.standard_normal(40)
    res = eps - 0.2
    raw, hat = empirical_process(eps, PHI, 4.0), empirical_process(res, PHI, 4.0)
    Rn = 0.9
    grid = np.unique(np.concatenate([np.linspace(-5, 5, 400_001), eps, res]))
    brute = 0.0
    for side in ("right", "left"):
        brute = max(brute, np.abs(hat.evaluate(grid, side) - raw.evaluate(grid, side) - Rn * PHI.pdf(grid)).max())
    exact = expansion_residual(raw, hat, Rn, PHI)
    assert exact >= brute - 1e-12
    assert exact == pytest.approx(brute, abs=1e-6)


# linearization remainder

def test_linearization_sup_matches_fine_grid():
    eps = np.random.default_rng(7).standard_normal(30)
    raw = empirical_process(eps, PHI, 5.0)
    S = eps.sum()
    grid = np.unique(np.concatenate([np.linspace(-6, 6, 600_001), eps]))
    brute = max(np.abs(raw.evaluate(grid, s) + PHI.pdf(grid) * S / 5.0).max() for s in ("right", "left"))
    exact = linearization_remainder(raw, S)
    assert exact >= brute - 1e-12
    assert exact == pytest.approx(brute, abs=1e-6)


@pytest.mark.slow
def test_linearization_remainder_decays():
    spec = LinearProcessSpec(kind="hyperbolic", H=0.75)
    med = {}
    for n in (512, 8192):
        s, F = process_sigma_n(spec, n), marginal_law(spec, spec.coefficients(n))
        vals = []
        for r in range(100):
            eps = simulate_linear_process(spec, n, seed=41, rep=r).values
            vals.append(linearization_remainder(empirical_process(eps, F, s), eps.sum()))
        med[n] = np.median(vals)
    assert med[8192] < med[512]


# statistics

def test_ks15_examples():
    p = empirical_process(np.random.default_rng(8).standard_normal(5), PHI, 1.0)
    assert ks_statistic_15(dataclasses.replace(p, sup_abs=0.0)).value == 0.0
    assert ks_statistic_15(dataclasses.replace(p, sup_abs=0.3)).value == pytest.approx(0.3 * math.sqrt(2 * math.pi))


def test_cor31_reduction_and_zero():
    eps = np.random.default_rng(9).standard_normal(64)
    raw = empirical_process(eps, PHI, 8.0)
    s31 = stat_corollary31(residual_process(eps, PHI, 8.0))
    assert s31.value == pytest.approx(ks_statistic_15(raw).value / 8.0, rel=1e-14)
    assert s31.info["single"] == pytest.approx(ks_statistic_15(raw).value, rel=1e-14)
    assert stat_corollary31(dataclasses.replace(raw, sup_abs=0.0)).value == 0.0


def test_cor41_degenerate_series():
    with pytest.raises(EstimationError):
        stat_corollary41(np.cumsum(np.zeros(100)), PHI, 10.0)


def test_cor41_row_and_reduction():
    eps = np.random.default_rng(10).standard_normal(256)
    y = np.cumsum(eps)
    stat = stat_corollary41(y, PHI, 16.0)
    # with phi forced to 1 the residuals are eps, matching the raw statistic
    forced = ks_statistic_15(residual_process(y - np.concatenate([[0.0], y[:-1]]), PHI, 16.0))
    raw = ks_statistic_15(empirical_process(eps, PHI, 16.0))
    assert forced.value == pytest.approx(raw.value, rel=1e-12)
    assert stat.value >= 0 and 0.9 < stat.info["phi_hat"] <= 1.05
    row = stat.row(H=0.5, model="AR", seed=1)
    assert list(row) == ["name", "value", "n", "H", "model", "seed", "normalizer"]


def test_cor31_regression_decays_smoke():
    spec = LinearProcessSpec(kind="hyperbolic", H=0.75)
    x = np.random.default_rng(11).standard_normal(2048)
    eps = simulate_linear_process(spec, 2048, seed=11).values
    fit = ols_regression(1.0 + 2.0 * x + eps, x)
    F = marginal_law(spec, spec.coefficients(2048))
    s = stat_corollary31(residual_process(fit, F, process_sigma_n(spec, 2048)))
    assert s.info["double"] < s.info["single"]


# local Whittle

def test_whittle_bandwidth_errors():
    x = np.random.default_rng(12).standard_normal(64)
    with pytest.raises(DomainError):
        local_whittle_H(x, m=64)
    with pytest.raises(DomainError):
        local_whittle_H(x, m=0)
    with pytest.raises(DomainError):
        local_whittle_H(np.ones(64))


def test_whittle_affine_invariance():
    x = simulate_linear_process(LinearProcessSpec(kind="fgn", H=0.7), 2048, seed=13).values
    assert local_whittle_H(3.5 * x - 2.0) == pytest.approx(local_whittle_H(x), abs=1e-4)


def test_whittle_iid_mean():
    spec = LinearProcessSpec(kind="iid")
    h = [local_whittle_H(simulate_linear_process(spec, 8192, seed=14, rep=r).values) for r in range(200)]
    assert abs(np.mean(h) - 0.5) <= 0.03


def test_whittle_bounds_respected():
    # strong trend pushes the estimate to the upper bound, which is clamped
    h = local_whittle_H(np.arange(1024.0) + np.random.default_rng(0).standard_normal(1024))
    assert 0.5 - 0.49 <= h <= 0.5 + 0.49
    assert h > 0.95


def test_ks15_null_smoke():
    spec = LinearProcessSpec(kind="fgn", H=0.75)
    s = process_sigma_n(spec, 1024)
    v = [ks_statistic_15(empirical_process(simulate_linear_process(spec, 1024, 15, r).values, PHI, s)).value
         for r in range(200)]
    # loose check that the scale is that of |N(0,1)|
    assert 0.4 < np.median(v) < 1.2
    assert stats.kstest(v, stats.halfnorm.cdf).statistic < 0.25
