import numpy as np
import pytest

from cgolab.lattice import GridSpec
from cgolab.media import ConductivityModel


@pytest.fixture(scope="session")
def grid():
    return GridSpec()


@pytest.fixture(scope="session")
def small_grid():
    return GridSpec(3, 32, 4.0, 1.0)


@pytest.fixture(scope="session")
def grid2():
    return GridSpec(2, 64, 4.0, 1.0)


@pytest.fixture(scope="session")
def gauss_model(grid):
    return ConductivityModel(grid, "gaussian-log", 0.1)


@pytest.fixture(scope="session")
def tent_model(grid):
    return ConductivityModel(grid, "mollified-tent", 0.1)


@pytest.fixture(scope="session")
def const_model(grid):
    return ConductivityModel(grid, "constant")


def random_field(grid, rng, complex_=True):
    v = rng.standard_normal(grid.shape)
    if complex_:
        v = v + 1j * rng.standard_normal(grid.shape)
    from cgolab.lattice import SpectralField

    return SpectralField(grid, v)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
