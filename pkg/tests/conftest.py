import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def dct_matrix(n):
    """Orthonormal DCT-II written out entry by entry."""
    k = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    c = np.cos(np.pi * k * (2 * j + 1) / (2 * n))
    scale = np.full((n, 1), np.sqrt(2.0 / n))
    scale[0] = np.sqrt(1.0 / n)
    return scale * c


def idft_matrix(n):
    """Unitary inverse DFT: entry (t, k) = exp(2 pi i t k / n) / sqrt(n)."""
    t = np.arange(n)[:, None]
    k = np.arange(n)[None, :]
    return np.exp(2j * np.pi * t * k / n) / np.sqrt(n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
