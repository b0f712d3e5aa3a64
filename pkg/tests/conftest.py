import numpy as np
import pytest

from reflected_stable import semigroup as sg
from reflected_stable.domain_grid import IntervalDomain, build_grid
from reflected_stable.reflection import Dirac, InteriorJump, UniformCore
from reflected_stable.stable_core import StableParams


@pytest.fixture(scope="session")
def D():
    return IntervalDomain(-1.0, 1.0)


@pytest.fixture(scope="session")
def cauchy():
    return StableParams(1.0)


@pytest.fixture(scope="session")
def small(D, cauchy):
    """n = 50 killed generator for alpha = 1 on (-1, 1)."""
    return sg.build_killed_generator(build_grid(D, 50), cauchy)


@pytest.fixture(scope="session")
def g200(D, cauchy):
    return sg.build_killed_generator(build_grid(D, 200), cauchy)


@pytest.fixture(scope="session")
def kernels(D, cauchy):
    return {"dirac": Dirac(D, 0.0), "uniform": UniformCore(D, 0.25), "jump": InteriorJump(D, cauchy)}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
