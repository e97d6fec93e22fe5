import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240831)


def random_image(rng, channels, h, w, lo=0.0, hi=1.0):
    return rng.uniform(lo, hi, size=(channels, h, w)).astype(np.float32)
