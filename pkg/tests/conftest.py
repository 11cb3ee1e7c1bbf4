import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fixtures import biased_train

settings.register_profile("default", deadline=None, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def biased():
    return biased_train()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
