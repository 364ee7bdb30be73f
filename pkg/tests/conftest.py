import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_assignment(rng, m, n, spread=1.0):
    W = np.exp(spread * rng.standard_normal((m, n)))
    return W / W.sum(axis=1, keepdims=True)


def random_tangent(rng, m, n):
    Z = rng.standard_normal((m, n))
    return Z - Z.mean(axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    """Log one acceptance line; printed in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion:>2}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
