import math

import numpy as np
import pytest

from coopnet.netmodel import NetworkParams


def reference_params(**overrides) -> NetworkParams:
    """lambda_s = 1e-4, D = 10, R = 0.5, alpha = 4, full-plane relay search, sigma_in = 1."""
    values = dict(lambda_s=1e-4, lambda_in=1.0 / (2.0 * math.pi), alpha=4.0, rate=0.5, dest_distance=10.0)
    values.update(overrides)
    sigma = values.pop("sigma_in", None)
    params = NetworkParams(**values)
    return params.replace(sigma_in=sigma) if sigma is not None else params


@pytest.fixture
def params():
    return reference_params()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
