import numpy as np
import pytest

from cnsphere.model import DiscreteMeasure, Scenario
from cnsphere.sphere import build_grid


@pytest.fixture(scope="session")
def circle64():
    return build_grid(1, 64)


@pytest.fixture(scope="session")
def sphere162():
    return build_grid(2, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_scenario(grid, mu=None, **kw):
    mu = DiscreteMeasure.uniform(grid) if mu is None else mu
    return Scenario(grid, mu, **kw)


def random_measure(grid, rng, spread=0.5):
    return DiscreteMeasure.normalized(grid, np.exp(spread * rng.normal(size=grid.size)))


def random_rotation(rng, n):
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    return q * np.sign(np.diag(r))


# one summary line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
