import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from chquench.grid import StripGrid
from chquench.physics import default_potentials
from chquench.problems import default_initial_data

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# lines collected by test_acceptance.py, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def _criterion(line):
    return int(line.split("criterion ", 1)[1].split(":", 1)[0])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=_criterion):
            terminalreporter.write_line(line)


@pytest.fixture
def pot():
    return default_potentials()


@pytest.fixture
def small_grid():
    return StripGrid(8, 4, 2.0, 1.0, 6, 0.3)


@pytest.fixture
def small_init(small_grid):
    return default_initial_data(small_grid)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
