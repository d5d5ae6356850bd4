import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.differing_executors],
)
settings.load_profile("default")


def random_spd(rng, n=2, cond=None):
    """Random SPD matrix; with ``cond`` the eigenvalues span exactly that ratio."""
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    if cond is None:
        w = np.exp(rng.uniform(-2, 2, n))
    else:
        w = np.geomspace(1.0, cond, n) * np.exp(rng.uniform(-1, 1))
    return (q * w) @ q.T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


@pytest.fixture
def report_criterion():
    """Record one PASS/FAIL line; the lines are repeated in the terminal summary."""

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
        _ACCEPTANCE.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
