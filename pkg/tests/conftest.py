import numpy as np
import pytest


def dirichlet_rows(rng, n, count):
    e = rng.standard_exponential((count, 2 * n))
    return e * (4 * n / e.sum(axis=1, keepdims=True))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
