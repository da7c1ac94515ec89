import numpy as np
import pytest

from netctl import models
from netctl.integrate import Scheme


class Linear(models.NetworkModel):
    """dx/dt = A x with one state per node; a test double."""

    name = "linear"

    def __init__(self, A, n=1):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.n = n
        self.N = self.A.shape[0] // n

    def drift(self, x):
        return self.A @ x

    def jacobian(self, x):
        return self.A.copy()


@pytest.fixture(scope="session")
def linear():
    return Linear


@pytest.fixture(scope="session")
def duffing10():
    g = models.grg_graph(10, 3)
    return models.duffing_model(models.sample_duffing(g, 4))


@pytest.fixture(scope="session")
def memory25():
    pats = np.array(models.letter_patterns("HTL"))
    return models.memory_model(models.MemoryParams(pats, models.hebb_weights(pats), 0.8))


@pytest.fixture
def ti():
    return Scheme("TI", 1e-4)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS):
            terminalreporter.write_line(line)
