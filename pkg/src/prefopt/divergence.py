"""Scalar Bernoulli information primitives.

All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["bern_kl", "bern_kl_binary", "logistic", "logistic_deriv", "bern_kl_vec"]

# Floor for log arguments; guards against underflow NaN only, never a
# statistical correction.
_LOG_FLOOR = 1e-300


def _check_prob(p: float, name: str) -> None:
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {p!r}")


def bern_kl(x: float, y: float) -> float:
    """KL divergence between Bernoulli(x) and Bernoulli(y).

    Returns +inf when y is degenerate (0 or 1) and x differs from it.
    Uses the convention 0*log(0/q) = 0.
    """
    _check_prob(x, "x")
    _check_prob(y, "y")
    if x == y:
        return 0.0
    if y <= 0.0 or y >= 1.0:
        # x != y here, so some observable event has probability zero under y.
        if (y == 0.0 and x > 0.0) or (y == 1.0 and x < 1.0):
            return math.inf
        return 0.0
    total = 0.0
    if x > 0.0:
        total += x * math.log(max(x, _LOG_FLOOR) / y)
    if x < 1.0:
        total += (1.0 - x) * math.log(max(1.0 - x, _LOG_FLOOR) / (1.0 - y))
    return max(total, 0.0)


def bern_kl_binary(a: float, b: float) -> float:
    """Alias of :func:`bern_kl`, kept for lower-bound reporting (kl(delta, 1-delta))."""
    return bern_kl(a, b)


def bern_kl_vec(x: np.ndarray, y: float) -> np.ndarray:
    """Elementwise bern_kl(x, y) for x in [0,1] and scalar y in (0,1)."""
    if not (0.0 < y < 1.0):
        raise ValueError("vectorized form requires y in (0, 1)")
    x = np.asarray(x, dtype=float)
    xc = np.clip(x, _LOG_FLOOR, 1.0)
    xm = np.clip(1.0 - x, _LOG_FLOOR, 1.0)
    out = x * np.log(xc / y) + (1.0 - x) * np.log(xm / (1.0 - y))
    return np.maximum(out, 0.0)


def logistic(u: float) -> float:
    """Standard logistic function, evaluated stably on both tails."""
    if u >= 0.0:
        return 1.0 / (1.0 + math.exp(-u))
    e = math.exp(u)
    return e / (1.0 + e)


def logistic_deriv(u: float) -> float:
    """Derivative of the logistic function: sigma(u) * (1 - sigma(u))."""
    s = logistic(u)
    return s * (1.0 - s)
