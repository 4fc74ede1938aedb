import math

import numpy as np
import pytest

from vortsel import heat, spectral
from vortsel.similarity import similarity_grid
from vortsel.vortex import build_vortex, similarity_force

DEFAULT = {"family": "two_level", "amplitude": 50.0}


@pytest.fixture(scope="session")
def profile():
    return build_vortex(DEFAULT, 0.5)


@pytest.fixture(scope="session")
def sim_grid():
    return similarity_grid()


@pytest.fixture(scope="session")
def spec(profile, sim_grid):
    return spectral.find_unstable_eigenvalue(spectral.similarity_operator(profile, 3, sim_grid))


@pytest.fixture(scope="session")
def heat_traj(profile):
    """Modified background out to tau = 6.5 (about 20 s)."""
    return heat.evolve_modified_background(similarity_force(profile), t_end=math.exp(6.5), stride=5)


@pytest.fixture(scope="session")
def sampler(heat_traj):
    return heat_traj.sampler()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
