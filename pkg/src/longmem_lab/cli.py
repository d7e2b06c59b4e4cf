"""``longmem-lab`` command line.

Exit codes: 0 success, 2 validation or usage error, 3 estimation error,
4 numerical error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .empirics import (cor41_pipeline, empirical_process, ks_statistic_15, residual_process,
                       stat_corollary31)
from .errors import ConfigurationError, LongMemError, ValidationError
from .harness import (ExperimentConfig, _csv, _weight, build_charpoly, build_regression, default_threads,
                      run_experiment, two_sample_ks)
from .linproc import LinearProcessSpec, marginal_law, process_sigma_n, simulate_linear_process
from .models import (compute_Rn, ols_ar, ols_regression, simulate_regression, simulate_unstable_ar,
                     weight_coeffs, weighted_lse)
from .rng import check_seed, child_seed

__all__ = ["main", "build_parser"]


def _load_json(path) -> dict:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigurationError("config must be a JSON object")
    return d


def _emit(text: str, out, name: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    p = Path(out)
    if p.suffix:
        p.parent.mkdir(parents=True, exist_ok=True)
    else:
        p.mkdir(parents=True, exist_ok=True)
        p = p / name
    p.write_bytes(text.encode("utf-8"))


def _rows_csv(header, rows) -> str:
    return _csv(header, rows)


def _series_cfg(d: dict, seed_flag):
    allowed = {"noise", "n", "model", "seed", "statistic", "reps"}
    unknown = set(d) - allowed
    if unknown:
        raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
    if "n" not in d:
        raise ConfigurationError("config: missing field 'n'")
    n = d["n"]
    if not isinstance(n, int) or n < 2:
        raise ConfigurationError(f"n: must be an integer >= 2, got {n!r}")
    spec = LinearProcessSpec.from_dict(d.get("noise", {}))
    seed = check_seed(seed_flag if seed_flag is not None else d.get("seed", 0))
    return spec, n, seed, d.get("model") or {}


def _simulate_model(spec, n, seed, model, rep=0):
    """Returns ``(columns, data, truth)`` for the configured model."""
    mtype = model.get("type")
    if mtype == "regression":
        r = build_regression(model, spec)
        y, x, eps = simulate_regression(r, n, seed, rep, return_noise=True)
        cols = ["t", "y"] + [f"x{i + 1}" for i in range(r.q)]
        data = np.column_stack([np.arange(1, n + 1), y, x]) if r.q else np.column_stack([np.arange(1, n + 1), y])
        return cols, data, {"y": y, "x": x, "eps": eps, "reg": r}
    if mtype == "ar":
        poly = build_charpoly(model)
        eps = simulate_linear_process(spec, n, seed, rep).values
        y = simulate_unstable_ar(poly, eps, np.zeros(poly.p))
        return ["t", "y"], np.column_stack([np.arange(1, n + 1), y]), {"y": y, "eps": eps, "poly": poly}
    if mtype is None:
        s = simulate_linear_process(spec, n, seed, rep)
        return ["t", "y"], np.column_stack([np.arange(1, n + 1), s.values]), {"y": s.values, "eps": s.values}
    raise ConfigurationError(f"model.type must be 'regression' or 'ar', got {mtype!r}")


def _fit(model, truth, spec, n):
    mtype = model.get("type")
    if mtype == "regression":
        how = model.get("fit", "ols")
        r = truth["reg"]
        if how == "ols":
            return ols_regression(truth["y"], truth["x"]), r.beta
        if how == "weighted":
            return weighted_lse(truth["y"], truth["x"], weight_coeffs(_weight(model), n - 1)), r.beta
        if how == "slope_only":
            return ols_regression(truth["y"], truth["x"], intercept=False, offset=r.alpha0), np.asarray(r.alpha)
        raise ConfigurationError(f"unknown regression fit {how!r}")
    if mtype == "ar":
        poly = truth["poly"]
        return ols_ar(truth["y"], poly.p, init=np.zeros(poly.p)), poly.phi
    raise ConfigurationError("fit needs a model with type 'regression' or 'ar'")


def cmd_simulate(args) -> int:
    spec, n, seed, model = _series_cfg(_load_json(args.config), args.seed)
    cols, data, _ = _simulate_model(spec, n, seed, model)
    if args.format == "json":
        obj = {"spec": spec.canonical(), "seed": seed, "n": n, "model": model,
               "columns": {c: data[:, i].tolist() for i, c in enumerate(cols)}}
        text = json.dumps(obj, sort_keys=True) + "\n"
    else:
        rows = ([int(r[0])] + [float(v) for v in r[1:]] for r in data)
        text = f"# spec={spec.canonical()} seed={seed} n={n}\n" + _rows_csv(cols, rows)
    _emit(text, args.out, "series." + args.format)
    return 0


def cmd_fit(args) -> int:
    spec, n, seed, model = _series_cfg(_load_json(args.config), args.seed)
    _, _, truth = _simulate_model(spec, n, seed, model)
    fit, beta = _fit(model, truth, spec, n)
    s = process_sigma_n(spec, n)
    rep = fit.report(sigma_n=s, Rn=compute_Rn(fit, beta, sigma_n=s), seed=seed, spec=spec.canonical())
    if args.format == "json":
        text = json.dumps(rep, sort_keys=True) + "\n"
    else:
        keys = sorted(rep)
        text = _rows_csv(keys, [[json.dumps(rep[k]) if isinstance(rep[k], list) else rep[k] for k in keys]])
    _emit(text, args.out, "fit." + args.format)
    return 0


def cmd_stat(args) -> int:
    d = _load_json(args.config)
    spec, n, seed, model = _series_cfg(d, args.seed)
    name = d.get("statistic", "KS_15")
    reps = int(d.get("reps", 1))
    if reps < 1:
        raise ConfigurationError(f"reps: must be a positive integer, got {reps}")
    F = marginal_law(spec, None if spec.kind.value == "fgn" else spec.coefficients(n), aux_seed=seed)
    s = process_sigma_n(spec, n)
    rows = []
    seed_n = child_seed(seed, n)
    for r in range(reps):
        if name == "KS_15":
            eps = simulate_linear_process(spec, n, seed_n, r).values
            st = ks_statistic_15(empirical_process(eps, F, s))
        elif name == "COR31":
            _, _, truth = _simulate_model(spec, n, seed_n, dict(model, type="regression"), r)
            fit, _ = _fit(dict(model, type="regression"), truth, spec, n)
            st = stat_corollary31(residual_process(fit, F, s))
        elif name == "COR41":
            eps = simulate_linear_process(spec, n, seed_n, r).values
            st = cor41_pipeline(simulate_unstable_ar([1.0], eps, [0.0]), F, s)[0]
        else:
            raise ConfigurationError(f"statistic must be KS_15, COR31 or COR41, got {name!r}")
        rows.append(st.row(H=spec.H, model=model.get("type", "none"), seed=seed) | {"rep": r})
    header = ["name", "value", "n", "H", "model", "seed", "normalizer", "rep"]
    if args.format == "json":
        text = json.dumps(rows, sort_keys=True) + "\n"
    else:
        text = _rows_csv(header, ([row[h] for h in header] for row in rows))
    _emit(text, args.out, "stats." + args.format)
    return 0


def _experiment_cfg(args, expect=None) -> ExperimentConfig:
    d = _load_json(args.config)
    if args.seed is not None:
        d["seed"] = args.seed
    if expect is not None:
        d.setdefault("experiment", expect)
        if d["experiment"] != expect:
            raise ConfigurationError(f"expected a {expect} config, got {d['experiment']!r}")
    return ExperimentConfig.from_dict(d)


def _threads(args) -> int:
    return default_threads() if args.threads is None else max(1, args.threads)


def cmd_tabulate(args) -> int:
    cfg = _experiment_cfg(args, "TABULATE")
    s = run_experiment(cfg, None, threads=_threads(args))
    t = s.table
    if args.format == "json":
        text = json.dumps({"functional": t.functional, "H": t.H, "a": t.a, "gamma": t.gamma, "N": t.N,
                           "reps": t.reps, "master_seed": t.master_seed, "probs": list(t.probs),
                           "quantiles": list(t.quantiles)}, sort_keys=True) + "\n"
    else:
        text = t.to_csv()
    _emit(text, args.out, "quantiles." + args.format)
    return 0


def cmd_experiment(args) -> int:
    cfg = _experiment_cfg(args)
    out = args.out or _load_json(args.config).get("out")
    s = run_experiment(cfg, out, threads=_threads(args))
    if args.format == "json":
        sys.stdout.write(json.dumps(s.rows, sort_keys=True, default=float) + "\n")
    else:
        sys.stdout.write(s.to_csv())
    return 0


def _read_column(path, column):
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError(f"{path} is empty") from None
    rows = list(reader)
    if column is None:
        for j, h in enumerate(header):
            try:
                vals = [float(r[j]) for r in rows]
            except (ValueError, IndexError):
                continue
            if h not in ("t", "rep", "n"):
                return np.array(vals)
        raise ValidationError(f"{path} has no numeric column")
    if column not in header:
        raise ValidationError(f"{path} has no column {column!r}; columns are {header}")
    j = header.index(column)
    try:
        return np.array([float(r[j]) for r in rows])
    except ValueError as exc:
        raise ValidationError(f"non-numeric value in {path}:{column}: {exc}") from None


def cmd_compare(args) -> int:
    x = _read_column(args.a, args.column)
    y = _read_column(args.b, args.column_b or args.column)
    d = two_sample_ks(x, y)
    if args.format == "json":
        sys.stdout.write(json.dumps({"ks_distance": d, "n_a": int(x.size), "n_b": int(y.size)}) + "\n")
    else:
        sys.stdout.write(repr(d) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit); overrides the config")
    common.add_argument("--out", help="output directory or file; stdout when omitted")
    common.add_argument("--threads", type=int, help="worker threads; default $LONGMEM_LAB_THREADS or 1")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    p = argparse.ArgumentParser(prog="longmem-lab", description="Residual empirical process laboratory.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, hlp in (
        ("simulate", cmd_simulate, "emit a simulated series or model data"),
        ("fit", cmd_fit, "simulate and fit a model, emit the fit report"),
        ("stat", cmd_stat, "emit statistic rows"),
        ("tabulate", cmd_tabulate, "emit a quantile table of a limit functional"),
        ("experiment", cmd_experiment, "run a Monte Carlo experiment"),
    ):
        sp = sub.add_parser(name, parents=[common], help=hlp)
        sp.set_defaults(func=fn, needs_config=True)
    cp = sub.add_parser("compare", parents=[common], help="two-sample KS distance between CSV columns")
    cp.add_argument("a")
    cp.add_argument("b")
    cp.add_argument("--column", help="column name (default: first numeric data column)")
    cp.add_argument("--column-b", help="column in the second file, if different")
    cp.set_defaults(func=cmd_compare, needs_config=False)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.needs_config and not args.config:
        parser.error(f"{args.command} requires --config")
    try:
        return args.func(args)
    except LongMemError as exc:
        print(f"longmem-lab: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"longmem-lab: error: {exc}", file=sys.stderr)
        return ValidationError.exit_code


if __name__ == "__main__":
    sys.exit(main())
