import numpy as np
import pytest

from feederca.demand import TruncNormalDemand, aggregates
from feederca.params import ModelParams
from feederca.solver import solve_design


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def field():
    return TruncNormalDemand.symmetric(3.0, 2.0, 1200.0)


@pytest.fixture(scope="session")
def agg(params, field):
    return aggregates(field, params.n, params.m)


@pytest.fixture(scope="session")
def solved(params, agg):
    return solve_design(params, agg, 10)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
