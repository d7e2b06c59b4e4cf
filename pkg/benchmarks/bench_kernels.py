"""Compare the compiled kernels with the pure-Python fallback.

Usage::

    python benchmarks/bench_kernels.py [--sizes 1024 16384 262144] [--repeat 5]

Prints the best-of-``repeat`` wall time per call for each backend and the
speedup. Outputs of both backends are checked for agreement first.
"""
import argparse
import timeit

import numpy as np

from longmem_lab import kernels


def cases(n, rng):
    s = np.sort(rng.standard_normal(n))
    x = np.sort(rng.standard_normal(n))
    F = 0.5 * (1 + np.tanh(s))
    eps = rng.standard_normal(n)
    return {
        "ar_recursion p=1": lambda k: k.ar_recursion(np.array([1.0]), eps, np.zeros(1)),
        "ar_recursion p=3": lambda k: k.ar_recursion(np.array([0.5, -0.2, 0.1]), eps, np.zeros(3)),
        "step_process": lambda k: k.step_process(s, F, float(n) ** 0.75),
        "merge_counts": lambda k: k.merge_counts(s, x),
        "two_sample_ks": lambda k: k.two_sample_ks(s, x),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(u, v) for u, v in zip(a, b))
    return np.allclose(a, b, rtol=1e-12, atol=1e-12)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[1024, 16384, 262144])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    py = kernels.load_backend("python")
    try:
        cy = kernels.load_backend("cython")
    except ImportError:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
        return 1

    rng = np.random.default_rng(0)
    print(f"{'kernel':<18} {'n':>8} {'python [ms]':>12} {'cython [ms]':>12} {'speedup':>8}")
    for n in args.sizes:
        for name, fn in cases(n, rng).items():
            if not _same(fn(py), fn(cy)):
                raise SystemExit(f"backends disagree on {name} at n={n}")
            number = max(1, 200_000 // n)
            t = {}
            for label, mod in (("python", py), ("cython", cy)):
                t[label] = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)) / number
            print(f"{name:<18} {n:>8} {1e3 * t['python']:>12.4f} {1e3 * t['cython']:>12.4f} "
                  f"{t['python'] / t['cython']:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
