import numpy as np
import pytest

from morawetz_lab.model import GridSpec, Mode, ModelParams, initial_data_gaussian
from morawetz_lab.solver import evolve_mode


@pytest.fixture(scope="session")
def small_run():
    """epsilon = 0.01, ell = 1, Gaussian at the trap, full field on [-2, 8]."""
    params = ModelParams(epsilon=0.01, t_horizon=6.0)
    grid = GridSpec.for_run(0.1, 8.0, 6.0)
    init = initial_data_gaussian(grid)
    traj = evolve_mode(params, Mode(1), grid, init, -2.0, 8.0)
    return traj


@pytest.fixture(scope="session")
def conservative_run():
    """epsilon = 0 companion of ``small_run``."""
    params = ModelParams(epsilon=0.0, t_horizon=6.0)
    grid = GridSpec.for_run(0.1, 8.0, 6.0)
    init = initial_data_gaussian(grid, phase="complex")
    return evolve_mode(params, Mode(1), grid, init, -2.0, 8.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one line per acceptance criterion for the terminal summary."""
    return request.config.stash[_ACCEPTANCE]


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
