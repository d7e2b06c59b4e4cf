"""Counter-based random streams.

A stream is a pure function of ``(master_seed, replication, label, *extra)``;
nothing is shared between replications, so the order in which workers finish
can never change a result.
"""
from __future__ import annotations

import numpy as np

from .errors import ValidationError

U64_MAX = 2**64 - 1

# stable integer tags; never renumber
LABELS = {
    "noise": 0,
    "regressor": 1,
    "init": 2,
    "fbm": 3,
    "aux": 4,
    "resample": 5,
}


def check_seed(seed) -> int:
    try:
        s = int(seed)
    except (TypeError, ValueError):
        raise ValidationError(f"seed must be an unsigned 64-bit integer, got {seed!r}") from None
    if s != seed or not 0 <= s <= U64_MAX:
        raise ValidationError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    return s


def stream(master_seed: int, rep: int = 0, label: str = "noise", *extra: int) -> np.random.Generator:
    """Philox generator keyed by the master seed, replication index and label."""
    seed = check_seed(master_seed)
    if rep < 0:
        raise ValidationError(f"replication index must be >= 0, got {rep}")
    try:
        tag = LABELS[label]
    except KeyError:
        raise ValidationError(f"unknown stream label {label!r}") from None
    ss = np.random.SeedSequence([seed, int(rep), tag, *map(int, extra)])
    return np.random.Generator(np.random.Philox(ss))


def child_seed(master_seed: int, *keys: int) -> int:
    """A u64 seed derived from ``master_seed`` and integer keys (e.g. one per sample size)."""
    ss = np.random.SeedSequence([check_seed(master_seed), *map(int, keys)])
    return int(ss.generate_state(1, np.uint64)[0])
