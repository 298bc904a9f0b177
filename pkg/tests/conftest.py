import numpy as np
import pytest

from jdfilter import preset


@pytest.fixture(scope="session")
def constants_spec():
    return preset("constants")


@pytest.fixture(scope="session")
def tanh_spec():
    return preset("tanh_drift")


@pytest.fixture(scope="session")
def linear_spec():
    return preset("linear_gaussian_jump")


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
