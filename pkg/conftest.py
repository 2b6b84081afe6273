import os
import sys

import numpy as np
import pytest

# Add the app directory to the Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'app'))

from lib.models import ModelSpec, build_model  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_lg():
    """Linear-Gaussian model with n = d = 6"""
    return build_model(ModelSpec.linear_gaussian(n=6, d=6))


@pytest.fixture
def scalar_lg():
    """n = d = 1, G = 1, prior variance 1, noise variance 1, so I(X; Y) = log(2) / 2"""
    return build_model(ModelSpec.linear_gaussian(
        n=1, d=1, forward=np.ones((1, 1)), prior_cov=np.eye(1), noise_cov=np.eye(1)
    ))


@pytest.fixture
def epidemic():
    return build_model(ModelSpec.epidemic())


@pytest.fixture
def spatial():
    return build_model(ModelSpec.spatial_poisson())
