import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from evcharge.model import Scenario

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def worked():
    """Two PEVGs, 30 MWh, opening price 17."""
    return Scenario.from_arrays([40.0, 50.0], [1.0, 2.0], 30.0, initial_price=17.0)


def random_instance(rng, n, capacity=99.0, p0=17.0):
    return Scenario.from_arrays(rng.uniform(35, 65, n), rng.uniform(1, 2, n), capacity, p0)


@st.composite
def scenarios(draw, max_n=12, capacities=(60.0, 80.0, 90.0, 99.0)):
    n = draw(st.integers(1, max_n))
    seed = draw(st.integers(0, 2**31 - 1))
    cap = draw(st.sampled_from(capacities))
    return random_instance(np.random.default_rng(seed), n, cap)


@st.composite
def vectors(draw, min_n=1, max_n=8, lo=-50.0, hi=50.0):
    n = draw(st.integers(min_n, max_n))
    vals = draw(st.lists(st.floats(lo, hi, allow_nan=False), min_size=n, max_size=n))
    return np.array(vals)
