import numpy as np
import pytest

ACCEPTANCE = []


def record(criterion, label, measured, bound, passed):
    """Register one acceptance line; printed in the terminal summary."""
    ACCEPTANCE.append((criterion, label, measured, bound, bool(passed)))
    return passed


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit, label, measured, bound, ok in sorted(ACCEPTANCE, key=lambda r: (int(r[0][1:].rstrip("abcdefgh")), r[0])):
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  {crit:<4} {label}: measured {measured}  (bound {bound})")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
