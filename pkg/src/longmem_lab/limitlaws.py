"""Fractional Brownian motion paths, the limit functionals of ``R_n`` and the unit-root KS statistic, and quantile tables."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg

from .errors import DomainError, NumericalError
from .linproc import fgn_sample
from .rng import check_seed, stream

__all__ = [
    "FbmPath",
    "LimitFunctionalSample",
    "QuantileTable",
    "fbm_path",
    "fbm_paths",
    "iterated_integrals",
    "stoch_integral_left",
    "omega_matrix",
    "rn_functional",
    "cor41_functional",
    "sample_rn_limit",
    "sample_cor41_limit",
    "quantile_table",
    "DEFAULT_PROBS",
]

DEFAULT_PROBS = (0.01, 0.05, 0.1, 0.5, 0.9, 0.95, 0.99)
BLOCK = 64


@dataclass(frozen=True)
class FbmPath:
    """``B_H`` on the grid ``i/N``, ``i = 0..N``; ``values[0] == 0``."""

    H: float
    N: int
    values: np.ndarray
    seed: int
    rep: int = 0

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.N + 1) / self.N


def _check_H(H) -> float:
    H = float(H)
    if not 0.0 < H < 1.0:
        raise DomainError(f"H must lie in (0, 1), got {H}")
    return H


def _check_N(N) -> int:
    if int(N) != N or N < 1:
        raise DomainError(f"grid size N must be a positive integer, got {N}")
    return int(N)


def _block_paths(H: float, N: int, seed: int, reps: range) -> np.ndarray:
    inc = fgn_sample(H, N, [stream(seed, r, "fbm") for r in reps])
    out = np.zeros((len(reps), N + 1))
    np.cumsum(inc, axis=1, out=out[:, 1:])
    out[:, 1:] *= float(N) ** (-H)
    return out


def _map_blocks(fn, reps: int, threads: int = 1, block: int = BLOCK) -> list:
    blocks = [range(s, min(s + block, reps)) for s in range(0, reps, block)]
    if threads <= 1 or len(blocks) == 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, blocks))


def fbm_paths(H: float, N: int, reps: int, seed: int, *, threads: int = 1, start: int = 0) -> np.ndarray:
    """``reps`` independent paths as a ``(reps, N + 1)`` array.

    Path ``r`` is drawn from its own stream ``(seed, start + r)``, so the
    result does not depend on ``threads``.
    """
    H, N, seed = _check_H(H), _check_N(N), check_seed(seed)
    if int(reps) != reps or reps < 1:
        raise DomainError(f"reps must be a positive integer, got {reps}")
    parts = _map_blocks(lambda b: _block_paths(H, N, seed, range(start + b.start, start + b.stop)),
                        int(reps), threads)
    return np.concatenate(parts, axis=0)


def fbm_path(H: float, N: int, seed: int, rep: int = 0) -> FbmPath:
    """Exact-in-distribution path: circulant-embedded fGn increments, summed and scaled by ``N^(-H)``."""
    v = fbm_paths(H, N, 1, seed, start=rep)[0]
    v.setflags(write=False)
    return FbmPath(float(H), int(N), v, int(seed), int(rep))


def _values(path) -> np.ndarray:
    return path.values if isinstance(path, FbmPath) else np.asarray(path, dtype=np.float64)


def iterated_integrals(path, a: int) -> np.ndarray:
    """``f_0 = B`` and ``f_j(t) = int_0^t f_{j-1}``, by cumulative trapezoid.

    Returns shape ``(..., a, N + 1)`` for input of shape ``(..., N + 1)``.
    """
    if int(a) != a or a < 1:
        raise DomainError(f"a must be a positive integer, got {a}")
    f = _values(path)
    N = f.shape[-1] - 1
    if N < 1:
        raise DomainError("a path needs at least two grid points")
    out = [f]
    for _ in range(int(a) - 1):
        out.append(integrate.cumulative_trapezoid(out[-1], dx=1.0 / N, axis=-1, initial=0.0))
    return np.stack(out, axis=-2)


def stoch_integral_left(f, B) -> np.ndarray | float:
    """Left-point sum ``sum_i f(t_i) (B(t_{i+1}) - B(t_i))`` along the last axis."""
    f, B = _values(f), _values(B)
    if f.shape[-1] != B.shape[-1]:
        raise DomainError(f"grid mismatch: {f.shape[-1]} vs {B.shape[-1]} points")
    out = np.sum(f[..., :-1] * np.diff(B, axis=-1), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def omega_matrix(fs) -> np.ndarray:
    """``omega_ij = int_0^1 f_i f_j`` by trapezoid; ``fs`` has shape ``(..., a, N + 1)``."""
    fs = np.asarray(fs, dtype=np.float64)
    if fs.ndim == 1:
        fs = fs[None, :]
    N = fs.shape[-1] - 1
    if N < 1:
        raise DomainError("paths need at least two grid points")
    w = np.full(N + 1, 1.0 / N)
    w[0] = w[-1] = 0.5 / N
    om = np.einsum("...in,...jn,n->...ij", fs, fs, w)
    return 0.5 * (om + np.swapaxes(om, -1, -2))


def _trap(fs: np.ndarray) -> np.ndarray:
    N = fs.shape[-1] - 1
    return integrate.trapezoid(fs, dx=1.0 / N, axis=-1)


def rn_functional(paths: np.ndarray, a: int, gamma: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """``(Gamma + zeta)' Omega^{-1} int xi`` per path.

    Returns ``(draws, ok)``. ``ok`` is false where ``Omega`` is numerically
    singular, and those draws are NaN.
    """
    paths = np.atleast_2d(paths)
    fs = iterated_integrals(paths, a)
    zeta = stoch_integral_left(fs, paths[:, None, :])
    zeta = np.atleast_2d(zeta).reshape(paths.shape[0], a)
    zeta[:, 0] += gamma
    om = omega_matrix(fs)
    xi_int = _trap(fs)
    draws = np.full(paths.shape[0], np.nan)
    ok = np.zeros(paths.shape[0], dtype=bool)
    if a == 1:
        w = om[:, 0, 0]
        ok = w > 1e-300
        draws[ok] = zeta[ok, 0] * xi_int[ok, 0] / w[ok]
        return draws, ok
    for r in range(paths.shape[0]):
        ev = np.linalg.eigvalsh(om[r])
        if not (ev[0] > ev[-1] * 1e-13 and ev[-1] > 0):
            continue
        c = linalg.cho_factor(om[r])
        draws[r] = float(zeta[r] @ linalg.cho_solve(c, xi_int[r]))
        ok[r] = True
    return draws, ok


def cor41_functional(paths: np.ndarray, *, plus_sign: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """``|B(1) - [int B dB][int B][int B^2]^{-1}|`` per path.

    The minus sign comes from the expansion ``Khat ~ K + R F'`` with
    ``K ~ -F' B(1)``. ``plus_sign=True`` uses ``+`` instead.
    """
    paths = np.atleast_2d(paths)
    r, ok = rn_functional(paths, 1)
    b1 = paths[:, -1]
    return np.abs(b1 + r if plus_sign else b1 - r), ok


@dataclass(frozen=True)
class LimitFunctionalSample:
    """Monte Carlo draws of a limit functional with full provenance."""

    functional: str
    draws: np.ndarray
    H: float
    N: int
    reps: int
    seed: int
    a: int = 1
    gamma: float = 0.0
    resampled: int = 0
    params: dict = field(default_factory=dict)


def _sample(fn, H_path: float, N: int, reps: int, seed: int, threads: int):
    """Draw ``fn(paths)`` per replication, redrawing singular cases from extra indices."""
    H_path, N, seed = _check_H(H_path), _check_N(N), check_seed(seed)
    if int(reps) != reps or reps < 1:
        raise DomainError(f"reps must be a positive integer, got {reps}")
    reps = int(reps)

    def block(b):
        return fn(_block_paths(H_path, N, seed, b))

    parts = _map_blocks(block, reps, threads)
    draws = np.concatenate([p[0] for p in parts])
    ok = np.concatenate([p[1] for p in parts])
    bad = np.flatnonzero(~ok)
    if bad.size > 0.01 * reps:
        raise NumericalError(f"singular Omega in {bad.size} of {reps} replications (more than 1%)")
    # replacements come from indices past reps, in order, so the result stays deterministic
    nxt = reps
    for i in bad:
        while True:
            d, good = fn(_block_paths(H_path, N, seed, range(nxt, nxt + 1)))
            nxt += 1
            if good[0]:
                draws[i] = d[0]
                break
            if nxt - reps > 10 * max(1, bad.size) + 10:
                raise NumericalError("could not redraw a nonsingular Omega")
    draws.setflags(write=False)
    return draws, int(bad.size)


def sample_rn_limit(a: int, H: float, gamma: float = 0.0, N: int = 4096, reps: int = 10_000,
                    seed: int = 0, *, threads: int = 1) -> LimitFunctionalSample:
    """Draws of the ``R_n`` limit for a root of multiplicity ``a`` at 1.

    For ``H <= 1/2`` the paths are standard Brownian motion and ``gamma``
    enters through ``Gamma = (gamma, 0, ..., 0)'``. For ``H > 1/2`` it is
    ignored.
    """
    if int(a) != a or a < 1:
        raise DomainError(f"a must be a positive integer, got {a}")
    H = _check_H(H)
    long_mem = H > 0.5
    g = 0.0 if long_mem else float(gamma)
    draws, nbad = _sample(lambda p: rn_functional(p, int(a), g), H if long_mem else 0.5, N, reps, seed, threads)
    return LimitFunctionalSample("RN_LIMIT", draws, H, int(N), int(reps), int(seed), int(a), g, nbad)


def sample_cor41_limit(H: float, N: int = 4096, reps: int = 10_000, seed: int = 0, *,
                       plus_sign: bool = False, threads: int = 1) -> LimitFunctionalSample:
    """Draws of the unit-root residual KS limit for ``H`` in ``(1/2, 1)``; one path feeds every term."""
    H = float(H)
    if not 0.5 < H < 1.0:
        raise DomainError(f"the unit-root KS limit needs H in (1/2, 1), got {H}")
    draws, nbad = _sample(lambda p: cor41_functional(p, plus_sign=plus_sign), H, N, reps, seed, threads)
    return LimitFunctionalSample("COR41", draws, H, int(N), int(reps), int(seed), 1, 0.0, nbad,
                                 {"plus_sign": bool(plus_sign)})


@dataclass(frozen=True)
class QuantileTable:
    functional: str
    H: float
    a: int
    gamma: float
    N: int
    reps: int
    master_seed: int
    probs: tuple
    quantiles: tuple

    HEADER = ("functional", "H", "a", "gamma", "N", "reps", "master_seed", "prob", "quantile")

    def rows(self):
        for p, q in zip(self.probs, self.quantiles):
            yield (self.functional, repr(float(self.H)), str(self.a), repr(float(self.gamma)),
                   str(self.N), str(self.reps), str(self.master_seed), repr(float(p)), repr(float(q)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.HEADER)
        w.writerows(self.rows())
        return buf.getvalue()


def quantile_table(sample, probs=DEFAULT_PROBS) -> QuantileTable:
    """Type-7 (linear interpolation) quantiles with the sample's provenance attached."""
    probs = tuple(float(p) for p in probs)
    if not probs or any(not 0.0 < p < 1.0 for p in probs) or list(probs) != sorted(probs):
        raise DomainError("probs must be a nonempty sorted sequence in (0, 1)")
    if isinstance(sample, LimitFunctionalSample):
        draws, meta = sample.draws, sample
    else:
        draws, meta = np.asarray(sample, dtype=np.float64), None
    if draws.size == 0:
        raise DomainError("cannot tabulate an empty sample")
    q = np.quantile(draws, probs, method="linear")
    if meta is None:
        return QuantileTable("SAMPLE", math.nan, 0, 0.0, 0, int(draws.size), 0, probs, tuple(float(v) for v in q))
    return QuantileTable(meta.functional, meta.H, meta.a, meta.gamma, meta.N, meta.reps, meta.seed,
                         probs, tuple(float(v) for v in q))
