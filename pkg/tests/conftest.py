import numpy as np
import pytest

from covine import families as fam


def simulate_pair(family, tau, rng):
    """Draw ``(u1, u2)`` row by row from ``family`` at Kendall's tau ``tau``."""
    spec = fam.parse_family(family)
    tau = np.asarray(tau, dtype=float)
    n = tau.size
    v, p = rng.uniform(size=(2, n))
    return fam.hinv(spec, 1, p, v, tau), v


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


_ACCEPTANCE = []


@pytest.fixture
def verdict():
    """Record one pass/fail line for an acceptance criterion."""

    def record(number, ok, detail):
        _ACCEPTANCE.append((number, bool(ok), detail))
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
