"""Seeded Monte Carlo experiments: simulate, fit, compute statistics, compare with sampled limits.

Output layout of ``run_experiment(cfg, out)``

``replications.csv``
    One row per ``(n, rep)`` with every recorded quantity. It is written as
    ``replications.csv.incomplete`` and renamed only once all rows are in.
``summary.csv``
    One row per ``(n, quantity)`` with mean, sd, quantiles and, where a
    reference law exists, the KS distance to it.
``quantiles.csv``
    TABULATE only; the quantile table.
``manifest.json``
    Canonical config echo, package version and SHA-256 of each output file.

No timestamps or host data are written. Equal configs give byte-identical files.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from . import __version__, kernels
from .empirics import (cor41_pipeline, empirical_process, expansion_residual, ks_statistic_15,
                       local_whittle_H, residual_process, stat_corollary31)
from .errors import ConfigurationError, DomainError
from .limitlaws import DEFAULT_PROBS, quantile_table, sample_cor41_limit, sample_rn_limit
from .linproc import (Kind, LinearProcessSpec, hyperbolic_autocovariance_exact, kappa, marginal_law,
                      process_sigma_n, sigma_n_sq, simulate_linear_process)
from .models import (CharPoly, RegressionSpec, WeightFunction, compute_Rn, expand_charpoly, ols_ar,
                     ols_regression, simulate_regression, simulate_unstable_ar, weight_coeffs, weighted_lse)
from .rng import check_seed, child_seed

__all__ = [
    "EXPERIMENTS",
    "ExperimentConfig",
    "McSummary",
    "run_experiment",
    "two_sample_ks",
    "ks_distance_to_cdf",
    "abs_normal_cdf",
    "default_threads",
    "build_regression",
    "build_charpoly",
]

EXPERIMENTS = ("KS15_NULL", "COR31_DECAY", "COR41_MATCH", "RN_MATCH", "SIGMA_SCALING", "HURST_RECOVERY", "TABULATE")
BLOCK = 16


def default_threads() -> int:
    raw = os.environ.get("LONGMEM_LAB_THREADS", "1")
    try:
        k = int(raw)
    except ValueError:
        raise ConfigurationError(f"LONGMEM_LAB_THREADS must be an integer, got {raw!r}") from None
    return max(1, k)


def two_sample_ks(x, y) -> float:
    """Sup-distance between two empirical CDFs, by a merge over both sorted samples."""
    x = np.sort(np.asarray(x, dtype=np.float64).ravel())
    y = np.sort(np.asarray(y, dtype=np.float64).ravel())
    if x.size == 0 or y.size == 0:
        raise DomainError("two_sample_ks needs two nonempty samples")
    if np.isnan(x).any() or np.isnan(y).any():
        raise DomainError("samples contain NaN")
    return kernels.two_sample_ks(x, y)


def abs_normal_cdf(x):
    """CDF of ``|N(0, 1)|``."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, 2.0 * special.ndtr(x) - 1.0, 0.0)


def ks_distance_to_cdf(x, cdf) -> float:
    """``sup_x |F_n(x) - cdf(x)|`` for a continuous ``cdf``, exact at the order statistics."""
    x = np.sort(np.asarray(x, dtype=np.float64).ravel())
    n = x.size
    if n == 0:
        raise DomainError("empty sample")
    F = cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


_FIELDS = {"experiment", "noise", "model", "n", "reps", "seed", "options", "reference", "out", "threads"}


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment; ``to_dict`` is the canonical serialization echoed into manifests."""

    experiment: str
    reps: int
    seed: int
    n: tuple = ()
    noise: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    reference: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigurationError("config must be a JSON object")
        problems = []
        unknown = sorted(set(d) - _FIELDS)
        if unknown:
            problems.append(f"unknown fields {unknown}")
        for req in ("experiment", "reps", "seed"):
            if req not in d:
                problems.append(f"missing field '{req}'")
        exp = d.get("experiment")
        if exp is not None and exp not in EXPERIMENTS:
            problems.append(f"experiment: {exp!r} is not one of {list(EXPERIMENTS)}")
        reps = d.get("reps")
        if "reps" in d and (not isinstance(reps, int) or isinstance(reps, bool) or reps < 1):
            problems.append(f"reps: must be a positive integer, got {reps!r}")
        if "seed" in d:
            try:
                check_seed(d["seed"])
            except Exception:
                problems.append(f"seed: must be an unsigned 64-bit integer, got {d['seed']!r}")
        n = d.get("n", [])
        n = [n] if isinstance(n, int) else n
        if exp not in (None, "TABULATE") and (not n or any(not isinstance(v, int) or v < 2 for v in n)):
            problems.append(f"n: must be a nonempty list of integers >= 2, got {d.get('n')!r}")
        for key in ("noise", "model", "options", "reference"):
            if key in d and not isinstance(d[key], dict):
                problems.append(f"{key}: must be an object")
        if problems:
            raise ConfigurationError("invalid experiment config: " + "; ".join(problems))
        cfg = cls(exp, int(reps), int(d["seed"]), tuple(int(v) for v in n), dict(d.get("noise", {})),
                  dict(d.get("model", {})), dict(d.get("options", {})), dict(d.get("reference", {})))
        cfg.noise_spec()  # validate eagerly
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "n": list(self.n),
            "reps": self.reps,
            "seed": self.seed,
            "noise": self.noise,
            "model": self.model,
            "options": self.options,
            "reference": self.reference,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def noise_spec(self) -> LinearProcessSpec | None:
        if not self.noise:
            return None if self.experiment == "TABULATE" else LinearProcessSpec()
        return LinearProcessSpec.from_dict(self.noise)


@dataclass
class McSummary:
    """Per ``(n, quantity)`` Monte Carlo summaries."""

    experiment: str
    rows: list = field(default_factory=list)
    replications: dict = field(default_factory=dict)
    reference: np.ndarray | None = None
    table: object = None

    COLUMNS = ("experiment", "n", "quantity", "reps", "mean", "sd", "median", "q05", "q95", "ks_distance", "reference")

    def get(self, n, quantity, key="median"):
        for r in self.rows:
            if r["n"] == n and r["quantity"] == quantity:
                return r[key]
        raise KeyError((n, quantity))

    def to_csv(self) -> str:
        return _csv(self.COLUMNS, ([r[c] for c in self.COLUMNS] for r in self.rows))


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _describe(x: np.ndarray) -> dict:
    x = np.asarray(x, dtype=np.float64)
    return {
        "reps": int(x.size),
        "mean": float(x.mean()),
        "sd": float(x.std(ddof=1)) if x.size > 1 else 0.0,
        "median": float(np.median(x)),
        "q05": float(np.quantile(x, 0.05)),
        "q95": float(np.quantile(x, 0.95)),
    }


def build_regression(model: dict, noise: LinearProcessSpec) -> RegressionSpec:
    allowed = {"type", "alpha0", "alpha", "regressor", "rho", "const_value", "fit", "weight"}
    unknown = set(model) - allowed
    if unknown:
        raise ConfigurationError(f"unknown regression model fields: {sorted(unknown)}")
    return RegressionSpec(alpha0=float(model.get("alpha0", 0.0)), alpha=tuple(model.get("alpha", (1.0,))),
                          regressor=model.get("regressor", "iid_gaussian"), rho=float(model.get("rho", 0.0)),
                          const_value=float(model.get("const_value", 0.0)), noise=noise)


def build_charpoly(model: dict):
    """``CharPoly`` from ``{"a", "b", "pairs"}``, or a plain ``phi`` list."""
    allowed = {"type", "a", "b", "pairs", "phi"}
    unknown = set(model) - allowed
    if unknown:
        raise ConfigurationError(f"unknown AR model fields: {sorted(unknown)}")
    if "phi" in model:
        phi = np.asarray(model["phi"], dtype=np.float64)
        if phi.ndim != 1 or phi.size < 1:
            raise ConfigurationError("phi must be a nonempty list")
        # multiplicity of the root z = 1, by repeated deflation
        a, c = 0, np.concatenate([[1.0], -phi])
        while c.size > 1 and abs(np.polynomial.polynomial.polyval(1.0, c)) < 1e-12:
            c = np.polynomial.polynomial.polydiv(c, [1.0, -1.0])[0]
            a += 1
        return CharPoly(a, 0, (), phi)
    return expand_charpoly(int(model.get("a", 1)), int(model.get("b", 0)),
                           tuple(tuple(p) for p in model.get("pairs", ())))


def _weight(model: dict) -> WeightFunction:
    w = model.get("weight", {"name": "constant_one"})
    name = w.get("name", "constant_one")
    if name == "constant_one":
        return WeightFunction.constant_one()
    if name == "truncated_inverse_spectrum":
        return WeightFunction.truncated_inverse_spectrum(float(w["d"]), float(w.get("floor", 1e-3)))
    raise ConfigurationError(f"unknown weight {name!r}")


class _Context:
    """Per-n cached quantities shared read-only by the replications."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.noise = cfg.noise_spec()
        self._sigma = {}
        self._F = {}
        self._w = {}

    def sigma_n(self, n):
        if n not in self._sigma:
            self._sigma[n] = process_sigma_n(self.noise, n)
        return self._sigma[n]

    def F(self, n):
        key = n if self.noise.truncated and self.noise.M is None else 0
        if key not in self._F:
            coeffs = self.noise.coefficients(n) if self.noise.kind is not Kind.FGN else None
            self._F[key] = marginal_law(self.noise, coeffs, aux_seed=self.cfg.seed)
        return self._F[key]

    def weight(self, n):
        if n not in self._w:
            self._w[n] = weight_coeffs(_weight(self.cfg.model), n - 1, method="fft")
        return self._w[n]


def _rep_ks15(ctx, n, seed, rep):
    eps = simulate_linear_process(ctx.noise, n, seed, rep).values
    raw = empirical_process(eps, ctx.F(n), ctx.sigma_n(n))
    return {"ks15": ks_statistic_15(raw).value}


def _rep_cor31(ctx, n, seed, rep):
    model = ctx.cfg.model
    spec = build_regression(model, ctx.noise)
    y, x, eps = simulate_regression(spec, n, seed, rep, return_noise=True)
    F, s = ctx.F(n), ctx.sigma_n(n)
    how = model.get("fit", "ols")
    if how == "ols":
        fit = ols_regression(y, x)
        beta, design = spec.beta, None
    elif how == "weighted":
        fit = weighted_lse(y, x, ctx.weight(n))
        beta, design = spec.beta, None
    elif how == "slope_only":
        # known intercept: regress y - alpha0 on x alone
        fit = ols_regression(y, x, intercept=False, offset=spec.alpha0)
        beta, design = np.asarray(spec.alpha), None
    else:
        raise ConfigurationError(f"unknown regression fit {how!r}")
    raw = empirical_process(eps, F, s)
    res = residual_process(fit, F, s)
    Rn = compute_Rn(fit, beta, design, s)
    st = stat_corollary31(res, F)
    return {
        "cor31_single": st.info["single"],
        "cor31_double": st.info["double"],
        "ks15_raw": ks_statistic_15(raw).value,
        "Rn": Rn,
        "expansion": expansion_residual(raw, res, Rn, F),
    }


def _rep_cor41(ctx, n, seed, rep):
    eps = simulate_linear_process(ctx.noise, n, seed, rep).values
    y = simulate_unstable_ar([1.0], eps, [0.0])
    F, s = ctx.F(n), ctx.sigma_n(n)
    stat, fit, res = cor41_pipeline(y, F, s)
    raw = empirical_process(eps, F, s)
    Rn = compute_Rn(fit, [1.0], sigma_n=s)
    return {
        "cor41": stat.value,
        "Rn": Rn,
        "expansion": expansion_residual(raw, res, Rn, F),
        "ks15_raw": ks_statistic_15(raw).value,
        "phi_hat": float(fit.beta_hat[0]),
    }


def _rep_rn(ctx, n, seed, rep):
    poly = build_charpoly(ctx.cfg.model)
    eps = simulate_linear_process(ctx.noise, n, seed, rep).values
    init = np.zeros(poly.p)
    y = simulate_unstable_ar(poly, eps, init)
    fit = ols_ar(y, poly.p, init=init)
    F, s = ctx.F(n), ctx.sigma_n(n)
    Rn = compute_Rn(fit, poly.phi, sigma_n=s)
    raw = empirical_process(eps, F, s)
    res = residual_process(fit, F, s)
    return {
        "Rn": Rn,
        "abs_Rn": abs(Rn),
        "expansion": expansion_residual(raw, res, Rn, F),
        "phi_err": float(np.max(np.abs(fit.beta_hat - poly.phi))),
    }


def _rep_hurst(ctx, n, seed, rep):
    opts = ctx.cfg.options
    eps = simulate_linear_process(ctx.noise, n, seed, rep).values
    x = eps
    if opts.get("source", "noise") == "ar_residuals":
        y = simulate_unstable_ar([1.0], eps, [0.0])
        x = ols_ar(y, 1, init=[0.0]).residuals
    m = opts.get("m")
    if m is None:
        m = int(math.floor(n ** float(opts.get("bandwidth_exponent", 0.65))))
    return {"H_hat": local_whittle_H(x, int(m))}


_REP = {
    "KS15_NULL": _rep_ks15,
    "COR31_DECAY": _rep_cor31,
    "COR41_MATCH": _rep_cor41,
    "RN_MATCH": _rep_rn,
    "HURST_RECOVERY": _rep_hurst,
}


def _run_reps(fn, ctx, n, seed, reps, threads, sink=None):
    def block(b):
        return [fn(ctx, n, seed, r) for r in b]

    blocks = [range(s, min(s + BLOCK, reps)) for s in range(0, reps, BLOCK)]
    # warm the per-n caches before any worker starts
    ctx.sigma_n(n)
    ctx.F(n)
    if ctx.cfg.model.get("fit") == "weighted":
        ctx.weight(n)
    out = []
    if threads <= 1:
        it = map(block, blocks)
        for part in it:
            out.extend(part)
            if sink:
                sink(part)
        return out
    with ThreadPoolExecutor(max_workers=threads) as ex:
        for part in ex.map(block, blocks):
            out.extend(part)
            if sink:
                sink(part)
    return out


def _reference(cfg: ExperimentConfig, ctx, threads):
    ref = cfg.reference
    if not ref:
        return None, None
    N = int(ref.get("N", 4096))
    reps = int(ref.get("reps", 10_000))
    seed = int(ref.get("seed", child_seed(cfg.seed, 0xF8B)))
    H = ctx.noise.H
    if cfg.experiment == "COR41_MATCH":
        s = sample_cor41_limit(H, N, reps, seed, plus_sign=bool(ref.get("plus_sign", False)), threads=threads)
        return "cor41", s
    if cfg.experiment == "RN_MATCH":
        poly = build_charpoly(cfg.model)
        if poly.a < 1:
            return None, None
        gamma = ref.get("gamma")
        if gamma is None:
            gamma = _gamma_short_memory(ctx.noise) if H <= 0.5 else 0.0
        return "Rn", sample_rn_limit(poly.a, H, float(gamma), N, reps, seed, threads=threads)
    raise ConfigurationError(f"experiment {cfg.experiment} takes no reference")


def _gamma_short_memory(spec: LinearProcessSpec, n_large: int = 1 << 16) -> float:
    """``1/2 (1 - E eps^2 / sigma^2)`` with ``sigma^2`` approximated by ``sigma_n^2 / n`` at large ``n``."""
    if spec.kind is Kind.IID:
        return 0.0
    g0 = spec.innovation.variance * float(np.dot(spec.coefficients(n_large), spec.coefficients(n_large)))
    s2 = process_sigma_n(spec, n_large) ** 2 / n_large
    return 0.5 * (1.0 - g0 / s2)


def _sigma_scaling(cfg: ExperimentConfig):
    spec = cfg.noise_spec()
    if spec.kind is not Kind.HYPERBOLIC or not 0.5 < spec.H < 1.0:
        raise ConfigurationError("SIGMA_SCALING needs a hyperbolic noise with 1/2 < H < 1")
    H, c0, s2e = spec.H, spec.c0, spec.innovation.variance
    k = kappa(H)
    rows = []
    for n in cfg.n:
        g = hyperbolic_autocovariance_exact(H, c0, s2e, n - 1)
        s2 = sigma_n_sq(g, n)
        base = c0**2 * s2e * float(n) ** (2 * H)
        rows.append({"sigma_n_sq": s2, "ratio_literal": s2 / (k * base),
                     "ratio_derived": s2 / (k / (H * (2 * H - 1)) * base)})
    return rows


def _tabulate(cfg: ExperimentConfig, threads: int):
    o = cfg.options
    allowed = {"functional", "H", "N", "probs", "a", "gamma", "plus_sign"}
    unknown = set(o) - allowed
    if unknown:
        raise ConfigurationError(f"unknown TABULATE options: {sorted(unknown)}")
    func = o.get("functional", "COR41")
    H = float(o.get("H", 0.75))
    N = int(o.get("N", 4096))
    probs = tuple(o.get("probs", DEFAULT_PROBS))
    if func == "COR41":
        s = sample_cor41_limit(H, N, cfg.reps, cfg.seed, plus_sign=bool(o.get("plus_sign", False)),
                               threads=threads)
    elif func == "RN_LIMIT":
        s = sample_rn_limit(int(o.get("a", 1)), H, float(o.get("gamma", 0.0)), N, cfg.reps, cfg.seed, threads=threads)
    else:
        raise ConfigurationError(f"unknown functional {func!r}")
    return s, quantile_table(s, probs)


def _write(path: Path, text: str) -> str:
    data = text.encode("utf-8")
    path.write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def _manifest(cfg, files: dict, extra: dict) -> str:
    m = {"config": cfg.to_dict(), "package_version": __version__, "files": files}
    m.update(extra)
    return json.dumps(m, sort_keys=True, indent=2) + "\n"


def run_experiment(cfg: ExperimentConfig, out=None, *, threads: int | None = None) -> McSummary:
    """Run the configured pipeline over every ``n`` and replication.

    Replication ``r`` at the ``k``-th sample size draws from streams keyed by
    ``(child_seed(seed, n), r)``. Results do not depend on ``threads``.
    """
    if not isinstance(cfg, ExperimentConfig):
        cfg = ExperimentConfig.from_dict(cfg)
    threads = default_threads() if threads is None else max(1, int(threads))
    outdir = Path(out) if out is not None else None
    if outdir is not None:
        outdir.mkdir(parents=True, exist_ok=True)
    summary = McSummary(cfg.experiment)
    files, extra = {}, {}

    if cfg.experiment == "TABULATE":
        s, table = _tabulate(cfg, threads)
        d = _describe(s.draws)
        summary.rows.append(dict(experiment=cfg.experiment, n=table.N, quantity=table.functional,
                                 ks_distance=None, reference=None, **d))
        extra["resampled"] = s.resampled
        if outdir is not None:
            files["quantiles.csv"] = _write(outdir / "quantiles.csv", table.to_csv())
            files["summary.csv"] = _write(outdir / "summary.csv", summary.to_csv())
            _write(outdir / "manifest.json", _manifest(cfg, files, extra))
        summary.table = table
        return summary

    if cfg.experiment == "SIGMA_SCALING":
        rows = _sigma_scaling(cfg)
        cols = ("experiment", "n", "rep", "sigma_n_sq", "ratio_literal", "ratio_derived")
        rep_rows = [[cfg.experiment, n, 0, r["sigma_n_sq"], r["ratio_literal"], r["ratio_derived"]]
                    for n, r in zip(cfg.n, rows)]
        for n, r in zip(cfg.n, rows):
            for q in ("sigma_n_sq", "ratio_literal", "ratio_derived"):
                summary.rows.append(dict(experiment=cfg.experiment, n=n, quantity=q, ks_distance=None,
                                         reference=None, **_describe([r[q]])))
        if outdir is not None:
            files["replications.csv"] = _write(outdir / "replications.csv", _csv(cols, rep_rows))
            files["summary.csv"] = _write(outdir / "summary.csv", summary.to_csv())
            _write(outdir / "manifest.json", _manifest(cfg, files, extra))
        return summary

    fn = _REP[cfg.experiment]
    ctx = _Context(cfg)
    ref_q, ref = _reference(cfg, ctx, threads) if cfg.reference else (None, None)
    if ref is not None:
        extra["reference"] = {"functional": ref.functional, "N": ref.N, "reps": ref.reps,
                              "seed": ref.seed, "resampled": ref.resampled}
        summary.reference = ref.draws

    tmp = outdir / "replications.csv.incomplete" if outdir is not None else None
    fh = open(tmp, "w", encoding="utf-8", newline="") if tmp is not None else None
    columns = None
    try:
        per_n = {}
        for n in cfg.n:
            seed_n = child_seed(cfg.seed, n)

            def sink(part, n=n):
                nonlocal columns
                if fh is None:
                    return
                if columns is None:
                    columns = list(part[0])
                    fh.write(_csv(["experiment", "n", "rep"] + columns, []))
                start = sink.count
                w = csv.writer(fh, lineterminator="\n")
                for i, row in enumerate(part):
                    w.writerow([cfg.experiment, n, start + i] + [_fmt(row[c]) for c in columns])
                sink.count += len(part)

            sink.count = 0
            per_n[n] = _run_reps(fn, ctx, n, seed_n, cfg.reps, threads, sink)
    except BaseException:
        if fh is not None:
            fh.close()
        raise
    if fh is not None:
        fh.close()

    for n in cfg.n:
        rows = per_n[n]
        for q in rows[0]:
            x = np.array([r[q] for r in rows], dtype=np.float64)
            ks, refname = None, None
            if cfg.experiment == "KS15_NULL" and q == "ks15":
                ks, refname = ks_distance_to_cdf(x, abs_normal_cdf), "abs_normal"
            elif cfg.experiment == "COR31_DECAY" and q == "cor31_single":
                ks, refname = ks_distance_to_cdf(x, abs_normal_cdf), "abs_normal"
            elif ref is not None and q == ref_q:
                ks, refname = two_sample_ks(x, ref.draws), ref.functional
            summary.rows.append(dict(experiment=cfg.experiment, n=n, quantity=q, ks_distance=ks,
                                     reference=refname, **_describe(x)))
    summary.replications = per_n
    if outdir is not None:
        final = outdir / "replications.csv"
        os.replace(tmp, final)
        files["replications.csv"] = hashlib.sha256(final.read_bytes()).hexdigest()
        files["summary.csv"] = _write(outdir / "summary.csv", summary.to_csv())
        _write(outdir / "manifest.json", _manifest(cfg, files, extra))
    return summary
