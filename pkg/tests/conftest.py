import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from levy_codebook import GridSpec, desk_preset

settings.register_profile("pkg", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pkg")


@pytest.fixture
def small_grid():
    return GridSpec.uniform(1.0, 0.05, 5.0, 0.25)


@pytest.fixture
def bns_grid():
    return GridSpec.uniform(2.0, 0.1, 5.0, 0.25)


@pytest.fixture
def desk():
    return desk_preset()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
