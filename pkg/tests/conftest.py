import numpy as np
import pytest

from decohere.states import make_named_state, as_density
from decohere.ree import ReeOptions


@pytest.fixture
def wwbar():
    return as_density(make_named_state('wwbar'))


@pytest.fixture
def star():
    return as_density(make_named_state('star'))


@pytest.fixture
def fast_ree():
    return ReeOptions(restarts=4, max_iters=1000)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
