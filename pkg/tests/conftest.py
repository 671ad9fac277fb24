import numpy as np
import pytest

from aubry.model import Frequency, GOLDEN, SILVER, TrigPotential


@pytest.fixture
def golden():
    return Frequency.golden()


@pytest.fixture
def pair():
    return Frequency.from_values([GOLDEN, SILVER])


def amo(lam, d=1):
    """v = 2 lam cos 2 pi x."""
    return TrigPotential.cosine(lam, d)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
