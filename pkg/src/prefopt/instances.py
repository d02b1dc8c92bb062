"""Problem instances: preference matrices, Bradley-Terry models, generators, JSON I/O.

Instances are immutable after construction and freely shareable; generators
consume a single-owner :class:`~prefopt.rng.RngState`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .divergence import logistic
from .rng import RngState

__all__ = [
    "PreferenceInstance",
    "StructuredModel",
    "ValidationReport",
    "canonical_pairs",
    "pair_to_index",
    "validate",
    "best_policy",
    "from_bt",
    "gen_unstructured16",
    "gen_structured32",
    "save_instance",
    "load_instance",
]

_RECIPROCITY_TOL = 1e-12


def canonical_pairs(K: int) -> list[tuple[int, int]]:
    """All pairs (i, j) with i < j, in row-major (canonical) order."""
    return [(i, j) for i in range(K) for j in range(i + 1, K)]


def pair_to_index(K: int) -> dict[tuple[int, int], int]:
    return {p: k for k, p in enumerate(canonical_pairs(K))}


@dataclass(frozen=True)
class PreferenceInstance:
    """K x K pairwise win-probability matrix with reciprocity."""

    mu: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.ndim != 2 or mu.shape[0] != mu.shape[1] or mu.shape[0] < 2:
            raise ValueError("mu must be a square matrix with K >= 2")
        if np.any(mu < 0.0) or np.any(mu > 1.0):
            raise ValueError("mu entries must lie in [0, 1]")
        object.__setattr__(self, "mu", mu)

    @property
    def K(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True)
class StructuredModel:
    """Bradley-Terry ground truth: parameter theta and policy features X."""

    theta: np.ndarray
    X: np.ndarray
    B: float
    L: float

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if theta.ndim != 1 or theta.size < 1:
            raise ValueError("theta must be a vector with d >= 1")
        if X.ndim != 2 or X.shape[1] != theta.size or X.shape[0] < 2:
            raise ValueError("X must be K x d with K >= 2")
        if np.linalg.norm(theta) > self.B + 1e-9:
            raise ValueError("theta norm exceeds B")
        diffs = X[:, None, :] - X[None, :, :]
        if np.max(np.linalg.norm(diffs, axis=2)) > self.L + 1e-9:
            raise ValueError("feature-difference norm exceeds L")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "X", X)

    @property
    def K(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.theta.size


@dataclass
class ValidationReport:
    diagonal_violations: list[int] = field(default_factory=list)
    reciprocity_violations: list[tuple[int, int]] = field(default_factory=list)
    undominated: list[int] = field(default_factory=list)

    @property
    def matrix_ok(self) -> bool:
        return not self.diagonal_violations and not self.reciprocity_violations

    @property
    def has_unique_best(self) -> bool:
        return len(self.undominated) == 1

    @property
    def best(self) -> int | None:
        return self.undominated[0] if self.has_unique_best else None


def validate(instance: PreferenceInstance) -> ValidationReport:
    """Check reciprocity/diagonal and whether a unique undominated policy exists."""
    mu = instance.mu
    K = instance.K
    report = ValidationReport()
    for i in range(K):
        if abs(mu[i, i] - 0.5) > _RECIPROCITY_TOL:
            report.diagonal_violations.append(i)
    for i in range(K):
        for j in range(i + 1, K):
            if abs(mu[i, j] + mu[j, i] - 1.0) > _RECIPROCITY_TOL:
                report.reciprocity_violations.append((i, j))
    off = mu + np.where(np.eye(K, dtype=bool), np.inf, 0.0)
    worst = off.min(axis=1)
    report.undominated = [int(i) for i in np.nonzero(worst > 0.5)[0]]
    return report


def best_policy(instance: PreferenceInstance) -> int:
    """argmax_i min_{j != i} mu(i, j); ties broken by lowest index."""
    mu = instance.mu
    off = mu + np.where(np.eye(instance.K, dtype=bool), np.inf, 0.0)
    worst = off.min(axis=1)
    return int(np.argmax(worst))


def from_bt(model: StructuredModel) -> PreferenceInstance:
    """Pairwise means induced by a Bradley-Terry model (mirrored exactly)."""
    scores = model.X @ model.theta
    K = model.K
    mu = np.full((K, K), 0.5)
    for i in range(K):
        for j in range(i + 1, K):
            p = logistic(scores[i] - scores[j])
            mu[i, j] = p
            mu[j, i] = 1.0 - p
    return PreferenceInstance(mu)


def gen_unstructured16(
    rng: RngState,
    K: int = 16,
    top_score: float = 0.55,
    score_drop: float = 1.90,
    noise_sd: float = 0.005,
) -> PreferenceInstance:
    """Latent-score instance: r_i = top - drop*i/(K-1) + N(0, sd^2), mu = logistic gap."""
    scores = np.empty(K)
    for i in range(K):
        scores[i] = top_score - score_drop * i / (K - 1) + noise_sd * rng.gaussian()
    mu = np.full((K, K), 0.5)
    for i in range(K):
        for j in range(i + 1, K):
            p = logistic(scores[i] - scores[j])
            mu[i, j] = p
            mu[j, i] = 1.0 - p
    return PreferenceInstance(mu)


def gen_structured32(
    rng: RngState,
    K: int = 32,
    d: int = 6,
    score_hi: float = 0.3,
    score_lo: float = -0.3,
    noise_sd: float = 0.25,
) -> StructuredModel:
    """Bradley-Terry instance: unit-norm theta, features b_i*theta + noise, sorted by score."""
    theta = np.array([rng.gaussian() for _ in range(d)])
    theta /= np.linalg.norm(theta)
    base = np.linspace(score_hi, score_lo, K)
    X = np.empty((K, d))
    for i in range(K):
        xi = np.array([rng.gaussian() for _ in range(d)])
        X[i] = base[i] * theta + noise_sd * xi
    order = np.argsort(-(X @ theta), kind="stable")
    X = X[order]
    diffs = X[:, None, :] - X[None, :, :]
    L = float(np.max(np.linalg.norm(diffs, axis=2)))
    return StructuredModel(theta=theta, X=X, B=1.0, L=L)


def save_instance(instance, path: str) -> None:
    with open(path, "w") as f:
        json.dump(instance_to_dict(instance), f)


def instance_to_dict(instance) -> dict:
    if isinstance(instance, PreferenceInstance):
        K = instance.K
        upper = [instance.mu[i, j] for i in range(K) for j in range(i + 1, K)]
        return {"kind": "unstructured", "K": K, "mu": upper}
    if isinstance(instance, StructuredModel):
        return {
            "kind": "structured",
            "K": instance.K,
            "theta": instance.theta.tolist(),
            "X": instance.X.tolist(),
            "B": instance.B,
            "L": instance.L,
        }
    raise TypeError(f"unsupported instance type: {type(instance)!r}")


def instance_from_dict(data: dict):
    kind = data.get("kind")
    if kind == "unstructured":
        K = int(data["K"])
        mu = np.full((K, K), 0.5)
        it = iter(data["mu"])
        for i in range(K):
            for j in range(i + 1, K):
                p = float(next(it))
                mu[i, j] = p
                mu[j, i] = 1.0 - p
        return PreferenceInstance(mu)
    if kind == "structured":
        return StructuredModel(
            theta=np.asarray(data["theta"], dtype=float),
            X=np.asarray(data["X"], dtype=float),
            B=float(data["B"]),
            L=float(data["L"]),
        )
    raise ValueError(f"unknown instance kind: {kind!r}")


def load_instance(path: str):
    with open(path) as f:
        return instance_from_dict(json.load(f))
