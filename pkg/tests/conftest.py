import numpy as np
import pytest

from ingarch_bayes.model import CountSeries, Link, ModelSpec, ParamVector, simulate


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def loglinear_spec():
    return ModelSpec(Link.LOG_LINEAR)


@pytest.fixture
def softplus_spec():
    return ModelSpec(Link.SOFTPLUS, 1.0)


@pytest.fixture
def a1_params():
    return ParamVector(0.3, 0.2, 0.6, 3.0)


@pytest.fixture
def b1_params():
    return ParamVector(0.3, 0.4, 0.25, 1.0)


@pytest.fixture
def small_a1_series(loglinear_spec, a1_params):
    return simulate(loglinear_spec, a1_params, 200, seed=11)


@pytest.fixture
def small_b1_series(softplus_spec, b1_params):
    return simulate(softplus_spec, b1_params, 200, seed=12)
