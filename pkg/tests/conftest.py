"""Shared test helpers: extended-precision oracles."""

import mpmath as mp
import numpy as np
import pytest

mp.mp.dps = 50


def mp_kl(x, y):
    """Bernoulli KL divergence evaluated at 50 significant digits."""
    x, y = mp.mpf(x), mp.mpf(y)
    total = mp.mpf(0)
    if x > 0:
        total += x * mp.log(x / y)
    if x < 1:
        total += (1 - x) * mp.log((1 - x) / (1 - y))
    return total


def mp_logistic(u):
    return 1 / (1 + mp.e ** (-mp.mpf(u)))


def mp_logistic_deriv(u):
    s = mp_logistic(u)
    return s * (1 - s)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
