"""Closed-form optimal allocation, characteristic time, and the GLR stopping
statistic for the unstructured policy space.

All operations are pure functions of their inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .divergence import bern_kl, bern_kl_binary, bern_kl_vec
from .instances import PreferenceInstance, best_policy, validate

__all__ = [
    "Allocation",
    "OpponentInfo",
    "NoUniqueBestError",
    "informative_opponent",
    "optimal_allocation",
    "characteristic_time",
    "lower_bound_samples",
    "glr_statistic",
    "glr_statistic_from_matrices",
    "rho_threshold",
    "D_FLOOR",
]

# Saturation for 1/d weights when an empirical gap is indistinguishable from a
# tie at 1/2; concentrates sampling on unresolved ties instead of dividing by 0.
D_FLOOR = 1e-12

_SIMPLEX_TOL = 1e-9


class NoUniqueBestError(ValueError):
    """Raised when an operation requires a unique undominated policy."""


@dataclass(frozen=True)
class OpponentInfo:
    policy: int
    opponent: int
    info: float


@dataclass(frozen=True)
class Allocation:
    """Nonnegative weights over canonical pairs, summing to one."""

    weights: dict[tuple[int, int], float]

    def __post_init__(self):
        total = 0.0
        for (i, j), w in self.weights.items():
            if not (0 <= i < j):
                raise ValueError(f"non-canonical pair {(i, j)}")
            if w < -_SIMPLEX_TOL:
                raise ValueError(f"negative weight {w} on pair {(i, j)}")
            total += w
        if abs(total - 1.0) > _SIMPLEX_TOL:
            raise ValueError(f"weights sum to {total}, expected 1")

    def as_matrix(self, K: int) -> np.ndarray:
        out = np.zeros((K, K))
        for (i, j), w in self.weights.items():
            out[i, j] = w
        return out

    def __getitem__(self, pair: tuple[int, int]) -> float:
        return self.weights.get(pair, 0.0)


def informative_opponent(mu: PreferenceInstance, i: int) -> OpponentInfo:
    """Most informative opponent for eliminating policy i, and its per-sample info.

    An opponent j beats i when the probability that j's response is preferred
    exceeds 1/2.  If nobody strictly beats i, info is 0 and the reported
    opponent is the lowest-index policy whose boundary value is closest to 1/2.
    """
    M = mu.mu
    K = mu.K
    best_j, best_d = -1, -1.0
    for j in range(K):
        if j == i:
            continue
        p_j_beats_i = M[j, i]
        if p_j_beats_i > 0.5:
            d = bern_kl(p_j_beats_i, 0.5)
            if d > best_d:  # strict: ties resolve to the lowest opponent index
                best_j, best_d = j, d
    if best_j >= 0:
        return OpponentInfo(policy=i, opponent=best_j, info=best_d)
    # Empty beating set: report the most contested boundary opponent.
    gaps = [(abs(M[j, i] - 0.5), j) for j in range(K) if j != i]
    gaps.sort()
    return OpponentInfo(policy=i, opponent=gaps[0][1], info=0.0)


def optimal_allocation(mu: PreferenceInstance, d_floor: float = D_FLOOR) -> Allocation:
    """Closed-form optimal sampling proportions: weight 1/d_i* on pair (i, j~(i))."""
    report = validate(mu)
    if not report.has_unique_best:
        raise NoUniqueBestError(
            "instance has no unique undominated policy; allocation undefined"
        )
    star = report.best
    inv = {}
    for i in range(mu.K):
        if i == star:
            continue
        opp = informative_opponent(mu, i)
        pair = (min(i, opp.opponent), max(i, opp.opponent))
        inv[pair] = inv.get(pair, 0.0) + 1.0 / max(opp.info, d_floor)
    total = sum(inv.values())
    return Allocation({p: w / total for p, w in inv.items()})


def characteristic_time(mu: PreferenceInstance) -> float:
    """Sum over suboptimal policies of 1/d_i*; infinite-boundary instances error."""
    report = validate(mu)
    if not report.has_unique_best:
        raise NoUniqueBestError("characteristic time requires a unique best policy")
    star = report.best
    total = 0.0
    for i in range(mu.K):
        if i == star:
            continue
        info = informative_opponent(mu, i).info
        if info <= 0.0:
            raise ValueError(
                f"policy {i} has zero elimination information; characteristic time is infinite"
            )
        total += 1.0 / info
    return total


def lower_bound_samples(mu: PreferenceInstance, delta: float) -> float:
    """Information-theoretic floor on the expected number of comparisons."""
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    return characteristic_time(mu) * bern_kl_binary(delta, 1.0 - delta)


def glr_statistic_from_matrices(counts: np.ndarray, mu_hat: np.ndarray) -> float:
    """GLR statistic from a symmetric count matrix and a full mean matrix.

    Candidate-wise closed form: for each i != i_hat, sum N * d(mean, 1/2) over
    the opponents currently beating i; return the minimum over candidates.
    """
    K = mu_hat.shape[0]
    off = mu_hat + np.where(np.eye(K, dtype=bool), np.inf, 0.0)
    i_hat = int(np.argmax(off.min(axis=1)))
    dmat = bern_kl_vec(mu_hat, 0.5)
    beats = mu_hat > 0.5  # beats[j, i]: j's response preferred over i's
    evid = (beats * counts * dmat).sum(axis=0)
    evid[i_hat] = np.inf
    return float(evid.min())


def glr_statistic(counts: np.ndarray, mu_hat: PreferenceInstance) -> float:
    return glr_statistic_from_matrices(np.asarray(counts, dtype=float), mu_hat.mu)


def rho_threshold(
    delta: float,
    t: int,
    mode: str = "heuristic",
    C: float = 1.0,
    S_size: int = 1,
) -> float:
    """Stopping threshold for the unstructured GLR test.

    `heuristic` is the default used in experiments; `theoretical` implements
    log(C t^2 log(1/delta)^(2|S|+1) / delta) with a user-supplied C.  The
    theoretical constant is only required to be "large enough"; C defaults
    to 1 and no calibration of that mode is claimed.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    if mode == "heuristic":
        return 2.0 * math.log((math.log(t) + 1.0) / delta)
    if mode == "theoretical":
        return math.log(
            C * t**2 * math.log(1.0 / delta) ** (2 * S_size + 1) / delta
        )
    raise ValueError(f"unknown threshold mode: {mode!r}")
