import numpy as np
import pytest

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def positive_instance(rng, n, m, r, low=0.1, high=1.0):
    X = rng.uniform(low, high, (n, m))
    A = rng.uniform(low, high, (n, r))
    S = rng.uniform(low, high, (r, m))
    return X, A, S
