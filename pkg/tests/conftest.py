import numpy as np
import pytest

from eecstab.eec import EecState, OscillatorConfig
from eecstab.grid import make_grid
from eecstab.spectrum import hermite_state


@pytest.fixture(scope="session")
def grid():
    return make_grid(8.0, 1025)


@pytest.fixture(scope="session")
def coarse_grid():
    return make_grid(10.0, 513)


def hermite_pair(n, grid, omega=1.0):
    h = hermite_state(n, omega, grid)
    return EecState(h, h, OscillatorConfig(omega))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
