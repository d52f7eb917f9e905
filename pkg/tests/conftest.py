import numpy as np
import pytest

from semistatic.instances import instance_a, binary_claim_market
from semistatic.utility import LogUtility, PowerUtility, kinked_utility


@pytest.fixture(scope="session")
def market_a():
    return instance_a()


@pytest.fixture(scope="session")
def market_s10():
    return binary_claim_market()


@pytest.fixture(scope="session")
def s10_utility():
    return kinked_utility()


SMOOTH = [LogUtility(), PowerUtility(0.5), PowerUtility(-1.0)]


@pytest.fixture(params=SMOOTH, ids=str)
def smooth_utility(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
