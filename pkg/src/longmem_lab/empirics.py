"""Empirical and residual empirical processes, their sup statistics, and local Whittle estimation.

Every process here is a step function minus a smooth function of ``x``. Between
consecutive jump points, and between critical points of the smooth part, it
is monotone. Its supremum over the real line is therefore attained at those
points, taking both the value there and the left limit. Each sup is computed
exactly on that finite set, so no grid needs tuning.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DomainError, EstimationError
from .linproc import MarginalLaw
from .models import ModelFit, ols_ar

__all__ = [
    "EmpiricalProcessResult",
    "TestStatistic",
    "empirical_process",
    "residual_process",
    "expansion_residual",
    "linearization_remainder",
    "ks_statistic_15",
    "stat_corollary31",
    "stat_corollary41",
    "cor41_pipeline",
    "local_whittle_H",
]


def _check_sigma(sigma_n) -> float:
    s = float(sigma_n)
    if not (s > 0 and math.isfinite(s)):
        raise DomainError(f"sigma_n must be positive and finite, got {sigma_n}")
    return s


@dataclass(frozen=True)
class EmpiricalProcessResult:
    """``(1/sigma_n) sum_t [I(e_t <= x) - F(x)]`` evaluated at the sorted sample.

    ``values`` holds the right-continuous values at ``eval_points`` and
    ``left`` the left limits. Beyond the sample extremes the process tends to 0.
    """

    eval_points: np.ndarray
    values: np.ndarray
    left: np.ndarray
    sup_abs: float
    sigma_n: float
    n: int
    kind: str
    F: MarginalLaw = field(repr=False)

    def evaluate(self, x, side: str = "right") -> np.ndarray:
        """Process value at arbitrary sorted points; ``side="left"`` gives left limits."""
        x = np.asarray(x, dtype=np.float64)
        order = None
        if x.size > 1 and np.any(np.diff(x) < 0):
            order = np.argsort(x, kind="stable")
            x = x[order]
        le, lt = kernels.merge_counts(self.eval_points, x)
        counts = (le if side == "right" else lt).astype(np.float64)
        with np.errstate(invalid="ignore"):
            out = (counts - self.n * self.F.cdf(x)) / self.sigma_n
        out[np.isneginf(x)] = 0.0
        out[np.isposinf(x)] = 0.0
        if order is not None:
            res = np.empty_like(out)
            res[order] = out
            out = res
        return out


@dataclass(frozen=True)
class TestStatistic:
    """A normalized sup statistic: ``value = sup_abs / normalizer``."""

    name: str
    value: float
    normalizer: float
    n: int
    info: dict = field(default_factory=dict)

    def row(self, **meta) -> dict:
        """CSV-ready record with columns name, value, n, H, model, seed, normalizer."""
        return {
            "name": self.name,
            "value": self.value,
            "n": self.n,
            "H": meta.get("H", ""),
            "model": meta.get("model", ""),
            "seed": meta.get("seed", ""),
            "normalizer": self.normalizer,
        }


def empirical_process(series, F: MarginalLaw, sigma_n: float, *, kind: str = "RAW") -> EmpiricalProcessResult:
    sigma_n = _check_sigma(sigma_n)
    s = np.sort(np.asarray(series, dtype=np.float64), kind="stable")
    if s.size == 0:
        raise DomainError("empty series")
    if not np.all(np.isfinite(s)):
        raise DomainError("series contains non-finite values")
    Fs = F.cdf(s)
    right, left, sup = kernels.step_process(s, Fs, sigma_n)
    for arr in (s, right, left):
        arr.setflags(write=False)
    return EmpiricalProcessResult(s, right, left, float(sup), sigma_n, int(s.size), kind, F)


def residual_process(fit, F: MarginalLaw, sigma_n: float) -> EmpiricalProcessResult:
    """Empirical process of the residuals ``y_t - beta_hat' X_t``."""
    resid = fit.residuals if isinstance(fit, ModelFit) else fit
    return empirical_process(resid, F, sigma_n, kind="RESIDUAL")


def _crit(F) -> np.ndarray:
    return np.asarray(getattr(F, "critical_points", ()), dtype=np.float64)


def expansion_residual(raw, resid, Rn: float, F: MarginalLaw) -> float:
    """``sup_x |Khat_n(x) - K_n(x) - R_n F'(x)|``.

    The ``F`` parts of the two processes cancel, leaving a step function
    minus ``R_n F'``. Its sup is taken over both jump sets and the critical
    points of ``F'``, using values and left limits.
    """
    if not math.isclose(raw.sigma_n, resid.sigma_n, rel_tol=1e-12):
        raise DomainError(f"processes use different sigma_n: {raw.sigma_n} vs {resid.sigma_n}")
    if getattr(raw, "n", None) != getattr(resid, "n", None):
        raise DomainError(f"processes have different sample sizes: {raw.n} vs {resid.n}")
    pts = np.unique(np.concatenate([
        np.asarray(raw.eval_points, dtype=np.float64),
        np.asarray(resid.eval_points, dtype=np.float64),
        _crit(F),
    ]))
    dF = Rn * F.pdf(pts)
    best = 0.0
    for side in ("right", "left"):
        d = resid.evaluate(pts, side) - raw.evaluate(pts, side) - dF
        best = max(best, float(np.abs(d).max()))
    return best


def linearization_remainder(raw: EmpiricalProcessResult, partial_sum: float) -> float:
    """``sup_x |K_n(x) + F'(x) S_n / sigma_n|`` with ``S_n = sum_t eps_t``.

    Between jumps the smooth part ``-n F + S_n F'`` has stationary points where
    ``F''/F' = n/S_n``. For a Gaussian ``F`` that is the single point
    ``-sigma^2 n / S_n``. For other laws the tabulated density grid is added.
    """
    F = raw.F
    S = float(partial_sum)
    extra = [_crit(F)]
    if F.kind == "GAUSSIAN_ANALYTIC":
        if S != 0.0:
            extra.append([-F.params["sigma"] ** 2 * raw.n / S])
    else:
        lo, hi = raw.eval_points[0], raw.eval_points[-1]
        extra.append(np.linspace(lo, hi, 8 * raw.n + 1))
    pts = np.unique(np.concatenate([raw.eval_points, *map(np.atleast_1d, extra)]))
    g = F.pdf(pts) * S / raw.sigma_n
    return float(max(np.abs(raw.evaluate(pts, "right") + g).max(),
                     np.abs(raw.evaluate(pts, "left") + g).max()))


def _sup_pdf(F: MarginalLaw) -> float:
    v = float(F.sup_pdf)
    if not (v > 0 and math.isfinite(v)):
        raise DomainError(f"sup F' must lie in (0, inf), got {v}")
    return v


def ks_statistic_15(raw: EmpiricalProcessResult, F: MarginalLaw | None = None) -> TestStatistic:
    """``sup_x |K_n(x)| / sup_x F'(x)``; the null limit is ``|N(0, 1)|`` under long memory."""
    c = _sup_pdf(F if F is not None else raw.F)
    return TestStatistic("KS_15", raw.sup_abs / c, c, raw.n)


def stat_corollary31(resid: EmpiricalProcessResult, F: MarginalLaw | None = None,
                     sigma_n: float | None = None) -> TestStatistic:
    """Residual sup statistic for the intercept regression, in both normalizations.

    ``value`` divides by ``sigma_n * sup F'``. The statistic is already
    ``1/sigma_n``-normalized, so this makes the total normalization
    ``sigma_n^2``. ``info["single"]`` holds ``sup|Khat_n| / sup F'`` with
    the single normalization.
    """
    c = _sup_pdf(F if F is not None else resid.F)
    s = _check_sigma(resid.sigma_n if sigma_n is None else sigma_n)
    return TestStatistic("COR31_CORRECTED", resid.sup_abs / (s * c), s * c, resid.n,
                         {"single": resid.sup_abs / c, "double": resid.sup_abs / (s * c)})


def cor41_pipeline(y, F: MarginalLaw, sigma_n: float, init=(0.0,)):
    """Unit-root AR(1) fit, its residual process and the statistic.

    Returns ``(statistic, fit, process)``. With the default ``init`` the
    regressor is ``y_{t-1}`` with ``y_0 = 0``, so all ``n`` residuals are used.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.size < 2 or not np.ptp(y) > 0:
        raise EstimationError("degenerate series: zero variance, the AR(1) fit is undefined")
    fit = ols_ar(y, 1, init=init)
    proc = residual_process(fit, F, sigma_n)
    c = _sup_pdf(F)
    stat = TestStatistic("COR41", proc.sup_abs / c, c, proc.n, {"phi_hat": float(fit.beta_hat[0])})
    return stat, fit, proc


def stat_corollary41(y, F: MarginalLaw, sigma_n: float, init=(0.0,)) -> TestStatistic:
    """``sup_x |Khat_n(x)| / sup F'`` after fitting ``y_t = phi y_{t-1} + eps_t`` by least squares."""
    return cor41_pipeline(y, F, sigma_n, init)[0]


_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_min(f, lo: float, hi: float, tol: float) -> float:
    a, b = lo, hi
    c = b - _GOLD * (b - a)
    d = a + _GOLD * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLD * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLD * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def local_whittle_H(series, m: int | None = None, *, bounds=(-0.49, 0.49), tol: float = 1e-4) -> float:
    """Local Whittle estimate ``H_hat = d_hat + 1/2`` from the ``m`` lowest Fourier frequencies.

    Parameters
    ----------
    series : array_like
        Observations; demeaned internally.
    m : int, optional
        Bandwidth, ``1 <= m <= n/2``. Defaults to ``floor(n ** 0.65)``.

    Returns
    -------
    float
        ``d_hat + 1/2`` where ``d_hat`` minimizes
        ``log(mean(lam^(2d) I)) - 2 d mean(log lam)`` on ``bounds``.
    """
    x = np.asarray(series, dtype=np.float64)
    n = x.size
    if m is None:
        m = int(math.floor(n**0.65))
    if int(m) != m or m < 1 or m > n / 2:
        raise DomainError(f"bandwidth m must satisfy 1 <= m <= n/2 = {n / 2}, got {m}")
    m = int(m)
    x = x - x.mean()
    if not np.any(x):
        raise DomainError("series is constant: periodogram vanishes")
    w = np.fft.rfft(x)[1 : m + 1]
    I = (w.real**2 + w.imag**2) / (2 * math.pi * n)
    lam = 2 * math.pi * np.arange(1, m + 1) / n
    loglam = np.log(lam)
    mean_log = loglam.mean()
    # rescale I so the objective is invariant to the series' units
    I = I / I.mean()

    def R(d):
        return math.log(np.mean(np.exp(2 * d * loglam) * I)) - 2 * d * mean_log

    return _golden_min(R, bounds[0], bounds[1], tol) + 0.5
