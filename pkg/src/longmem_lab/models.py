"""Stochastic regression with an intercept and unstable AR(p) models: simulation and least squares."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, linalg

from . import kernels
from .errors import ConfigurationError, DomainError, EstimationError
from .linproc import LinearProcessSpec, TimeSeriesSample, simulate_linear_process
from .rng import check_seed, stream

__all__ = [
    "CharPoly",
    "RegressionSpec",
    "ModelFit",
    "WeightFunction",
    "expand_charpoly",
    "simulate_unstable_ar",
    "ols_ar",
    "ols_regression",
    "simulate_regression",
    "weight_coeffs",
    "weighted_lse",
    "compute_Rn",
]


@dataclass(frozen=True)
class CharPoly:
    """``phi(z) = (1 - z)^a (1 + z)^b prod_k (1 - 2 cos(theta_k) z + z^2)^(d_k)``.

    ``phi`` holds ``phi_1..phi_p`` with ``phi(z) = 1 - phi_1 z - ... - phi_p z^p``.
    """

    a: int
    b: int
    pairs: tuple
    phi: np.ndarray

    @property
    def p(self) -> int:
        return self.phi.size

    @property
    def poly(self) -> np.ndarray:
        """Ascending coefficients ``[1, -phi_1, ..., -phi_p]``."""
        return np.concatenate([[1.0], -self.phi])

    def __call__(self, z):
        return np.polynomial.polynomial.polyval(z, self.poly)


def expand_charpoly(a: int, b: int, pairs=()) -> CharPoly:
    if a < 0 or b < 0 or int(a) != a or int(b) != b:
        raise DomainError("root multiplicities a, b must be nonnegative integers")
    c = np.array([1.0])
    clean = []
    for theta, d in pairs:
        if not 0.0 < theta < math.pi:
            raise DomainError(f"theta must lie in (0, pi), got {theta}")
        if int(d) != d or d < 1:
            raise DomainError(f"pair multiplicity must be a positive integer, got {d}")
        clean.append((float(theta), int(d)))
    for _ in range(a):
        c = np.convolve(c, [1.0, -1.0])
    for _ in range(b):
        c = np.convolve(c, [1.0, 1.0])
    for theta, d in clean:
        for _ in range(d):
            c = np.convolve(c, [1.0, -2.0 * math.cos(theta), 1.0])
    if c.size == 1:
        raise DomainError("p = a + b + 2 sum d_k must be at least 1")
    return CharPoly(int(a), int(b), tuple(clean), -c[1:] + 0.0)


def _phi_of(poly) -> np.ndarray:
    if isinstance(poly, CharPoly):
        return poly.phi
    return np.atleast_1d(np.asarray(poly, dtype=np.float64))


def simulate_unstable_ar(poly, noise, init=None) -> np.ndarray:
    """``y_t = sum_i phi_i y_{t-i} + eps_t`` for ``t = 1..n``.

    ``init`` lists the starting values ``y_{1-p}, ..., y_0`` oldest first and
    defaults to zeros.
    """
    phi = _phi_of(poly)
    eps = noise.values if isinstance(noise, TimeSeriesSample) else np.asarray(noise, dtype=np.float64)
    init = np.zeros(phi.size) if init is None else np.asarray(init, dtype=np.float64)
    if init.shape != (phi.size,):
        raise DomainError(f"init must have length p = {phi.size}, got shape {init.shape}")
    return kernels.ar_recursion(phi, eps, init)


@dataclass(frozen=True)
class ModelFit:
    """Least-squares fit; ``residuals == response - design @ beta_hat`` exactly."""

    beta_hat: np.ndarray
    residuals: np.ndarray
    model: str
    conditioning: float
    design: np.ndarray
    response: np.ndarray
    info: dict = field(default_factory=dict)

    def report(self, **extra) -> dict:
        out = {
            "model": self.model,
            "beta_hat": [float(v) for v in self.beta_hat],
            "conditioning": float(self.conditioning),
        }
        if "alpha0_hat" in self.info:
            out["alpha0_hat"] = float(self.info["alpha0_hat"])
        out.update(extra)
        return out


def _lstsq(X: np.ndarray, y: np.ndarray):
    s = np.linalg.svd(X, compute_uv=False)
    smax, smin = float(s[0]), float(s[-1])
    if smax == 0.0 or smin <= smax * max(X.shape) * np.finfo(float).eps:
        raise EstimationError(f"singular design: smallest singular value {smin:.3e} (largest {smax:.3e})")
    Q, R = np.linalg.qr(X)
    beta = linalg.solve_triangular(R, Q.T @ y)
    return beta, smax / smin


def _fit(X, y, model, **info) -> ModelFit:
    beta, cond = _lstsq(X, y)
    resid = y - X @ beta
    for arr in (X, y, beta, resid):
        arr.setflags(write=False)
    return ModelFit(beta, resid, model, cond, X, y, info)


def ar_design(y, p: int, init=None):
    """Rows ``X_t = (y_{t-1}, ..., y_{t-p})`` and responses ``y_t``.

    With ``init`` every observation is used; without it the first ``p`` serve
    as presample values.
    """
    y = np.asarray(y, dtype=np.float64)
    if init is None:
        full, start = y, p
    else:
        init = np.asarray(init, dtype=np.float64)
        if init.shape != (p,):
            raise DomainError(f"init must have length p = {p}")
        full, start = np.concatenate([init, y]), p
    T = full.size - start
    X = np.empty((T, p))
    for i in range(1, p + 1):
        X[:, i - 1] = full[start - i : full.size - i]
    return X, full[start:].copy()


def ols_ar(y, p: int, init=None) -> ModelFit:
    """LSE of ``(phi_1, ..., phi_p)``."""
    if int(p) != p or p < 1:
        raise DomainError(f"p must be a positive integer, got {p}")
    y = np.asarray(y, dtype=np.float64)
    n_rows = y.size if init is not None else y.size - p
    if n_rows <= p:
        raise DomainError(f"need more than p = {p} usable observations, got {n_rows}")
    X, resp = ar_design(y, int(p), init)
    return _fit(X, resp, "AR_LSE")


def ols_regression(y, x=None, *, intercept: bool = True, offset: float = 0.0) -> ModelFit:
    """OLS of ``y - offset`` on ``[1, x]`` (or on ``x`` alone when ``intercept`` is false)."""
    y = np.asarray(y, dtype=np.float64) - offset
    n = y.size
    cols = [np.ones((n, 1))] if intercept else []
    if x is not None:
        x = np.asarray(x, dtype=np.float64).reshape(n, -1)
        if x.shape[1]:
            cols.append(x)
    if not cols:
        raise DomainError("empty design")
    fit = _fit(np.hstack(cols), y, "REGRESSION_OLS")
    if intercept:
        fit.info["alpha0_hat"] = float(fit.beta_hat[0])
    return fit


_REGRESSORS = ("iid_gaussian", "ar1", "constant")


@dataclass(frozen=True)
class RegressionSpec:
    """``y_t = alpha0 + alpha' x_t + eps_t`` with ``x`` independent of ``eps``."""

    alpha0: float = 0.0
    alpha: tuple = ()
    regressor: str = "iid_gaussian"
    rho: float = 0.0
    const_value: float = 0.0
    noise: LinearProcessSpec = field(default_factory=LinearProcessSpec)

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        if self.regressor not in _REGRESSORS:
            raise ConfigurationError(f"unknown regressor generator {self.regressor!r}; expected one of {_REGRESSORS}")
        if self.regressor == "ar1" and not -1.0 < self.rho < 1.0:
            raise ConfigurationError(f"stationary AR(1) regressors need |rho| < 1, got {self.rho}")

    @property
    def q(self) -> int:
        return len(self.alpha)

    @property
    def beta(self) -> np.ndarray:
        return np.array((self.alpha0,) + self.alpha)


def simulate_regression(spec: RegressionSpec, n: int, seed: int, rep: int = 0, *,
                        return_noise: bool = False):
    """Draw ``(y, x)``; regressors and noise use distinct stream labels."""
    seed = check_seed(seed)
    eps = simulate_linear_process(spec.noise, n, seed, rep, "noise").values
    q = spec.q
    if spec.regressor == "constant":
        x = np.full((n, q), float(spec.const_value))
    else:
        rng = stream(seed, rep, "regressor")
        z = rng.standard_normal((q, n))
        if spec.regressor == "ar1":
            # x_0 from the stationary law, then x_t = rho x_{t-1} + sqrt(1 - rho^2) z_t
            s = math.sqrt(1.0 - spec.rho**2)
            x = np.stack([
                np.concatenate([row[:1], kernels.ar_recursion([spec.rho], s * row[1:], row[:1])])
                for row in z
            ]) if q else z
        else:
            x = z
        x = np.ascontiguousarray(x.T)
    y = spec.alpha0 + (x @ np.asarray(spec.alpha) if q else 0.0) + eps
    y = np.asarray(y, dtype=np.float64)
    if return_noise:
        return y, x, eps
    return y, x


@dataclass(frozen=True)
class WeightFunction:
    """Even, ``2 pi``-periodic weight ``phi(lambda)`` and its coefficients.

    ``coeffs[j] = (2 pi)^(-2) int_{-pi}^{pi} phi(l) cos(j l) dl``; when present,
    ``coeffs`` may run past the lag actually used, which lets ``tail_sum``
    report the truncation error.
    """

    name: str
    phi: Callable
    coeffs: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    @classmethod
    def constant_one(cls) -> "WeightFunction":
        return cls("CONSTANT_ONE", lambda lam: np.ones_like(np.asarray(lam, dtype=np.float64)))

    @classmethod
    def truncated_inverse_spectrum(cls, d: float, floor: float = 1e-3, sigma2: float = 1.0) -> "WeightFunction":
        """``1 / max(f, floor)`` for the FARIMA(0, d, 0) spectral density ``f``."""
        if not -0.5 < d < 0.5:
            raise DomainError(f"d must lie in (-1/2, 1/2), got {d}")

        def phi(lam):
            lam = np.asarray(lam, dtype=np.float64)
            with np.errstate(divide="ignore"):
                f = sigma2 / (2 * math.pi) * np.abs(2.0 * np.sin(lam / 2.0)) ** (-2.0 * d)
            return 1.0 / np.maximum(f, floor)

        return cls("TRUNCATED_INVERSE_SPECTRUM", phi, params={"d": d, "floor": floor, "sigma2": sigma2})

    @classmethod
    def from_callable(cls, name: str, fn: Callable) -> "WeightFunction":
        return cls(name, fn)

    @property
    def J(self) -> int:
        return -1 if self.coeffs is None else self.coeffs.size - 1

    def tail_sum(self, n: int) -> float:
        """``sum_{j >= n} |phi_j|`` over the stored coefficients."""
        if self.coeffs is None:
            return float("nan")
        return float(np.abs(self.coeffs[n:]).sum())


def _check_even(phi: Callable) -> None:
    lam = np.linspace(0.01, math.pi - 0.01, 257)
    a = np.asarray(phi(lam), dtype=np.float64)
    b = np.asarray(phi(-lam), dtype=np.float64)
    if not np.allclose(a, b, rtol=1e-10, atol=1e-12):
        raise ConfigurationError("weight function is not even: phi(-l) != phi(l)")


def weight_coeffs(w: WeightFunction, J: int, method: str = "fft", grid: int = 1 << 22) -> WeightFunction:
    """Fourier coefficients ``phi_0..phi_J`` by adaptive cosine quadrature or a periodic trapezoid/FFT."""
    if int(J) != J or J < 1:
        raise DomainError(f"J must be a positive integer, got {J}")
    J = int(J)
    _check_even(w.phi)
    if method == "quad":
        out = np.empty(J + 1)
        scale = 2.0 / (2 * math.pi) ** 2
        f = lambda lam: float(w.phi(np.float64(lam)))
        # cusps (e.g. |lambda|^(2d) at 0) trip quad's roundoff heuristic; the fft path cross-checks
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            out[0] = scale * integrate.quad(f, 0.0, math.pi, epsabs=1e-14, epsrel=1e-12, limit=500)[0]
            for j in range(1, J + 1):
                out[j] = scale * integrate.quad(f, 0.0, math.pi, weight="cos", wvar=j,
                                                epsabs=1e-14, epsrel=1e-12, limit=500)[0]
    elif method == "fft":
        L = max(int(grid), 4 * (J + 1))
        lam = 2 * math.pi * np.arange(L // 2 + 1) / L
        half = np.asarray(w.phi(lam), dtype=np.float64)
        samples = np.concatenate([half, half[-2:0:-1]]) if L % 2 == 0 else np.concatenate([half, half[:0:-1]])
        spec = np.fft.rfft(samples).real / (2 * math.pi * L)
        out = spec[: max(J + 1, min(spec.size, 2 * (J + 1)))]
    else:
        raise ConfigurationError(f"unknown quadrature method {method!r}")
    if not np.all(np.isfinite(out)):
        raise ConfigurationError("weight coefficients are not finite; phi must be integrable")
    out.setflags(write=False)
    return WeightFunction(w.name, w.phi, out, dict(w.params, method=method))


def _toeplitz_apply(c: np.ndarray, V: np.ndarray) -> np.ndarray:
    """``T V`` with ``T[t, s] = c[|t - s|]`` via a circulant embedding."""
    n = V.shape[0]
    L = 1 << int(math.ceil(math.log2(2 * n)))
    row = np.zeros(L)
    row[:n] = c[:n]
    row[L - n + 1 :] = c[1:n][::-1]
    lam = np.fft.rfft(row)
    return np.fft.irfft(lam[:, None] * np.fft.rfft(V, L, axis=0), L, axis=0)[:n]


def _weighted_sums(xc, yc, c, method):
    if method == "fft":
        TX = _toeplitz_apply(c, np.column_stack([xc, yc]))
        G = xc.T @ TX[:, :-1]
        r = xc.T @ TX[:, -1]
    elif method == "direct":
        T = linalg.toeplitz(c[: xc.shape[0]])
        G = xc.T @ T @ xc
        r = xc.T @ (T @ yc)
    else:
        raise ConfigurationError(f"unknown weighted-LSE method {method!r}")
    return 0.5 * (G + G.T), r


def weighted_lse(y, x, w: WeightFunction, method: str = "fft") -> ModelFit:
    """Weighted LSE of the slopes with the intercept recovered from the means.

    ``alpha_hat`` solves ``[sum_t sum_s xc_t xc_s' phi_{t-s}] alpha =
    sum_t sum_s xc_t yc_s phi_{t-s}`` on demeaned data; the intercept is
    ``ybar - alpha_hat' xbar``. ``method="direct"`` builds the dense ``n x n``
    Toeplitz weight matrix and is kept as the reference path.
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    x = np.asarray(x, dtype=np.float64).reshape(n, -1)
    q = x.shape[1]
    if q < 1:
        raise DomainError("weighted LSE needs at least one regressor")
    if w.coeffs is None or w.J < n - 1:
        w = weight_coeffs(w, n - 1, method="fft")
    c = np.asarray(w.coeffs[:n], dtype=np.float64)
    xbar = x.mean(axis=0)
    ybar = y.mean()
    G, r = _weighted_sums(x - xbar, y - ybar, c, method)
    s = np.linalg.svd(G, compute_uv=False)
    if s[0] == 0.0 or s[-1] <= s[0] * q * 1e3 * np.finfo(float).eps:
        raise EstimationError(f"singular weighted Gram matrix: smallest singular value {s[-1]:.3e}")
    alpha = linalg.lstsq(G, r)[0]
    alpha0 = ybar - float(alpha @ xbar)
    beta = np.concatenate([[alpha0], alpha])
    X = np.hstack([np.ones((n, 1)), x])
    resid = y - X @ beta
    for arr in (X, y, beta, resid):
        arr.setflags(write=False)
    return ModelFit(beta, resid, "REGRESSION_WEIGHTED", float(s[0] / s[-1]), X, y,
                    {"alpha0_hat": alpha0, "weight": w.name, "tail_sum": w.tail_sum(n)})


def compute_Rn(fit, beta_true, design=None, sigma_n: float = 1.0) -> float:
    """``R_n = (beta_hat - beta)' sum_t X_t / sigma_n``."""
    if not sigma_n > 0:
        raise DomainError(f"sigma_n must be positive, got {sigma_n}")
    beta_hat = fit.beta_hat if isinstance(fit, ModelFit) else np.asarray(fit, dtype=np.float64)
    if design is None:
        if not isinstance(fit, ModelFit):
            raise DomainError("design is required when fit is a plain coefficient vector")
        design = fit.design
    design = np.asarray(design, dtype=np.float64)
    beta_true = np.atleast_1d(np.asarray(beta_true, dtype=np.float64))
    total = design.sum(axis=0) if design.ndim == 2 else np.atleast_1d(design)
    if not (beta_hat.shape == beta_true.shape == total.shape):
        raise DomainError(f"dimension mismatch: beta_hat {beta_hat.shape}, beta {beta_true.shape}, sum X {total.shape}")
    return float((beta_hat - beta_true) @ total) / float(sigma_n)
