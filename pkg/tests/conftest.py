import numpy as np
import pytest

from qfpt.stepgate import reference_sequences


@pytest.fixture(scope="session")
def pulse_library():
    return reference_sequences()


@pytest.fixture()
def rng():
    return np.random.default_rng(20250810)
