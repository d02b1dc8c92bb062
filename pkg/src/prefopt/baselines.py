"""Benchmark pair-selection strategies.

All strategies share the engine's ledger, stopping rule, and decision rule;
only pair selection differs, so stopping times are directly comparable.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "METHODS",
    "make_strategy",
    "LlmPoStrategy",
    "RoundRobinStrategy",
    "RandomPairStrategy",
    "EpsGreedyStrategy",
    "DoubleTsStrategy",
    "RucbStrategy",
]


class LlmPoStrategy:
    """Adaptive design: track the empirically optimal allocation with forced exploration."""

    def select(self, engine) -> tuple[int, int]:
        engine.update_target()
        engine.cum_target += engine.target
        return engine.next_pair()


class RoundRobinStrategy:
    """Deterministic cycle over canonical pairs."""

    def __init__(self):
        self.cursor = 0

    def select(self, engine) -> tuple[int, int]:
        pair = engine.pairs[self.cursor]
        self.cursor = (self.cursor + 1) % engine.P
        return pair


class RandomPairStrategy:
    """Uniformly random canonical pair."""

    def select(self, engine) -> tuple[int, int]:
        return engine.pairs[int(engine.rng.integers(engine.P))]


class EpsGreedyStrategy:
    """With probability eps a random pair; else the current best vs its
    empirically strongest opponent."""

    def select(self, engine) -> tuple[int, int]:
        if engine.rng.random() < engine.cfg.eps:
            return engine.pairs[int(engine.rng.integers(engine.P))]
        est = engine.estimate_matrix()
        K = engine.K
        off = est + np.where(np.eye(K, dtype=bool), np.inf, 0.0)
        i_hat = int(np.argmax(off.min(axis=1)))
        row = est[i_hat].copy()
        row[i_hat] = np.inf
        opp = int(np.argmin(row))
        return (min(i_hat, opp), max(i_hat, opp))


def _sampled_matrix(engine, draws: np.ndarray) -> np.ndarray:
    K = engine.K
    M = np.full((K, K), 0.5)
    ii, jj = engine.pair_rows, engine.pair_cols
    M[ii, jj] = draws
    M[jj, ii] = 1.0 - draws
    return M


class DoubleTsStrategy:
    """Beta-posterior sampling for candidate and opponent (Double-TS style);
    operates on raw pair counts in both modes."""

    def select(self, engine) -> tuple[int, int]:
        a = 1.0 + engine.ledger.W
        b = 1.0 + engine.ledger.N - engine.ledger.W
        M1 = _sampled_matrix(engine, engine.rng.beta(a, b))
        K = engine.K
        off = M1 + np.where(np.eye(K, dtype=bool), np.inf, 0.0)
        cand = int(np.argmax(off.min(axis=1)))
        M2 = _sampled_matrix(engine, engine.rng.beta(a, b))
        col = M2[:, cand].copy()
        col[cand] = -np.inf
        opp = int(np.argmax(col))
        return (min(cand, opp), max(cand, opp))


class RucbStrategy:
    """Upper-confidence-bound candidate from the plausible winner set,
    dueled against the opponent most likely to beat it."""

    def select(self, engine) -> tuple[int, int]:
        K = engine.K
        t = max(engine.t, 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            bonus = np.sqrt(engine.cfg.alpha * np.log(t) / engine.N_full)
        U = engine.mu_full + bonus
        U[engine.N_full == 0] = 1.0
        np.fill_diagonal(U, 0.5)
        plausible = np.nonzero((U + np.where(np.eye(K, dtype=bool), np.inf, 0.0)).min(axis=1) >= 0.5)[0]
        if plausible.size == 0:
            plausible = np.arange(K)
        cand = int(plausible[engine.rng.integers(plausible.size)])
        col = U[:, cand].copy()
        col[cand] = -np.inf
        opp = int(np.argmax(col))
        return (min(cand, opp), max(cand, opp))


METHODS = {
    "llm-po": LlmPoStrategy,
    "round-robin": RoundRobinStrategy,
    "random": RandomPairStrategy,
    "eps-greedy": EpsGreedyStrategy,
    "double-ts": DoubleTsStrategy,
    "rucb": RucbStrategy,
}


def make_strategy(method: str, engine):
    try:
        return METHODS[method]()
    except KeyError:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(METHODS)}") from None
