import numpy as np
import pytest

from shellbench.girkmann import GirkmannConstants


@pytest.fixture(scope="session")
def constants():
    return GirkmannConstants()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
