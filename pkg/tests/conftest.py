import numpy as np
import pytest

from sdrelay.ofdm import OfdmConfig, RootRaisedCosine, SquaredPulse
from sdrelay.relay import design_canceler, reference_params
from sdrelay.sim import SimConfig


@pytest.fixture(scope="session")
def squared_params():
    return reference_params("squared")


@pytest.fixture(scope="session")
def rrc_params():
    return reference_params("rrc")


@pytest.fixture(scope="session")
def squared_ctrl(squared_params):
    return design_canceler(squared_params)


@pytest.fixture(scope="session")
def rrc_ctrl(rrc_params):
    return design_canceler(rrc_params)


@pytest.fixture(scope="session")
def squared_cfg(squared_params):
    return SimConfig(squared_params, OfdmConfig(pulse=SquaredPulse()))


@pytest.fixture(scope="session")
def rrc_cfg(rrc_params):
    return SimConfig(rrc_params, OfdmConfig(pulse=RootRaisedCosine()))


@pytest.fixture
def rng():
    return np.random.default_rng(20140701)
