import numpy as np
import pytest

from risalloc.channel import EffectiveChannel


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_effective(rng, K, n_b, n_r, scale=1.0):
    return EffectiveChannel(scale * crandn(rng, K, n_b, n_r), scale * crandn(rng, K, n_b))


def unit(v):
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
