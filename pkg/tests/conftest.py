import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from clicktime.grid import make_grid
from clicktime.radial import PotentialSpec, build_phase_table

settings.register_profile(
    "default", deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.function_scoped_fixture, HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid():
    """Working grid: E in [0.5, 4.5], h = 0.01."""
    return make_grid(0.5, 4.5, 401)


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(0.5, 4.5, 81)


@pytest.fixture(scope="session")
def fiber_grid():
    return make_grid(1.0, 3.0, 41, fiber_dim=2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def tables(grid):
    """Phase tables on the working grid momenta, built once."""
    k = grid.momenta
    return {
        "free": build_phase_table(PotentialSpec.free(), k),
        "hard_sphere": build_phase_table(PotentialSpec.hard_sphere(1.0), k),
        "exponential": build_phase_table(PotentialSpec.exponential(5.0, 1.0), k),
    }


@pytest.fixture(scope="session")
def time_grid():
    return np.linspace(-60.0, 70.0, 4000)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
