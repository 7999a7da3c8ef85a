import numpy as np
import pytest

from levelcut.core import DiscreteSpace, SeedPolicy
from levelcut.objectives import gen_random_linear


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_discrete_linear(num_points=1024, d=16, seed=0):
    """A finite space of random box points with a random linear objective."""
    policy = SeedPolicy(seed, 0)
    gen = policy.rng("problem")
    objective = gen_random_linear(d, gen)
    features = gen.uniform(-1.0, 1.0, size=(num_points, d))
    space = DiscreteSpace(ids=tuple(range(num_points)), features=features)
    return objective, space
