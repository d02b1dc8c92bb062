"""Regularized Bradley-Terry estimation and small dense linear algebra.

The log-likelihood depends on the comparison log only through per-pair win
counts, so all solvers work on pair aggregates rather than raw records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .instances import canonical_pairs

__all__ = [
    "ComparisonRecord",
    "TrialLedger",
    "ConvergenceError",
    "reg_mle",
    "g_and_H",
    "project_estimator",
    "jacobi_eigenvalues",
    "lambda_min",
    "log_det",
    "lambda_schedule",
]


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, last_iterate: np.ndarray, gradient_norm: float):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.gradient_norm = gradient_norm


@dataclass(frozen=True)
class ComparisonRecord:
    pair: tuple[int, int]
    outcome: int  # 1 iff the lower-index policy of the canonical pair won
    step: int


class TrialLedger:
    """Per-pair counts and win counts plus the chronological comparison log.

    When constructed with a feature matrix, the ledger also maintains the
    running second-moment matrix V_t of sampled feature differences.
    """

    def __init__(self, K: int, X: np.ndarray | None = None):
        self.K = K
        self.pairs = canonical_pairs(K)
        self.pair_index = {p: k for k, p in enumerate(self.pairs)}
        P = len(self.pairs)
        self.N = np.zeros(P)
        self.W = np.zeros(P)
        self.log_pairs: list[int] = []
        self.log_outcomes: list[int] = []
        self.X = None
        self.Z = None
        self.V = None
        if X is not None:
            X = np.asarray(X, dtype=float)
            self.X = X
            self.Z = np.array([X[i] - X[j] for (i, j) in self.pairs])
            self.V = np.zeros((X.shape[1], X.shape[1]))

    @property
    def t(self) -> int:
        return len(self.log_pairs)

    def record(self, pair: tuple[int, int], outcome: int) -> None:
        i, j = pair
        if not (0 <= i < j < self.K):
            raise ValueError(f"non-canonical pair {pair}")
        if outcome not in (0, 1):
            raise ValueError(f"outcome must be 0 or 1, got {outcome!r}")
        k = self.pair_index[pair]
        self.N[k] += 1
        self.W[k] += outcome
        self.log_pairs.append(k)
        self.log_outcomes.append(outcome)
        if self.V is not None:
            z = self.Z[k]
            self.V += np.outer(z, z)

    def records(self) -> list[ComparisonRecord]:
        return [
            ComparisonRecord(pair=self.pairs[k], outcome=o, step=s + 1)
            for s, (k, o) in enumerate(zip(self.log_pairs, self.log_outcomes))
        ]

    def counts_matrix(self) -> np.ndarray:
        out = np.zeros((self.K, self.K))
        for k, (i, j) in enumerate(self.pairs):
            out[i, j] = out[j, i] = self.N[k]
        return out

    def mu_hat_matrix(self) -> np.ndarray:
        """Empirical means; never-sampled pairs default to 1/2."""
        out = np.full((self.K, self.K), 0.5)
        for k, (i, j) in enumerate(self.pairs):
            if self.N[k] > 0:
                p = self.W[k] / self.N[k]
                out[i, j] = p
                out[j, i] = 1.0 - p
        return out


def _require_features(ledger: TrialLedger, X: np.ndarray | None) -> np.ndarray:
    if ledger.Z is not None:
        return ledger.Z
    if X is None:
        raise ValueError("ledger carries no features and X was not provided")
    X = np.asarray(X, dtype=float)
    return np.array([X[i] - X[j] for (i, j) in ledger.pairs])


def _active(ledger: TrialLedger, Z: np.ndarray):
    mask = ledger.N > 0
    return Z[mask], ledger.N[mask], ledger.W[mask]


def _sigma(u: np.ndarray) -> np.ndarray:
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    e = np.exp(u[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _log_sigma(u: np.ndarray) -> np.ndarray:
    # log sigma(u) = -log(1 + exp(-u)), stable on both tails
    return -np.logaddexp(0.0, -u)


def reg_mle(
    ledger: TrialLedger,
    X: np.ndarray | None = None,
    lam: float = 1.0,
    warm_start: np.ndarray | None = None,
    tol_scale: float = 1e-9,
    max_iter: int = 100,
) -> np.ndarray:
    """Maximizer of the l2-regularized Bradley-Terry log-likelihood.

    Newton iterations with step halving; gradient norm at the solution is
    at most tol_scale * max(1, total sample count).
    """
    if lam <= 0.0:
        raise ValueError("lam must be positive")
    Z = _require_features(ledger, X)
    d = Z.shape[1]
    Za, Na, Wa = _active(ledger, Z)
    theta = np.zeros(d) if warm_start is None else np.array(warm_start, dtype=float)
    if Za.shape[0] == 0:
        return np.zeros(d)
    tol = tol_scale * max(1.0, float(Na.sum()))

    def objective(th):
        u = Za @ th
        return float(Wa @ _log_sigma(u) + (Na - Wa) @ _log_sigma(-u)) - 0.5 * lam * float(th @ th)

    def gradient(th):
        u = Za @ th
        return Za.T @ (Wa - Na * _sigma(u)) - lam * th

    obj = objective(theta)
    grad = gradient(theta)
    for _ in range(max_iter):
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            return theta
        u = Za @ theta
        s = _sigma(u)
        w = Na * s * (1.0 - s)
        H = (Za * w[:, None]).T @ Za + lam * np.eye(d)
        step = np.linalg.solve(H, grad)
        alpha = 1.0
        accepted = False
        for _ in range(60):
            cand = theta + alpha * step
            cand_obj = objective(cand)
            cand_grad = gradient(cand)
            # Near the optimum the objective is flat to machine precision,
            # so also accept steps that shrink the gradient.
            if cand_obj > obj or float(np.linalg.norm(cand_grad)) < gnorm:
                theta, obj, grad = cand, cand_obj, cand_grad
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
    gnorm = float(np.linalg.norm(gradient(theta)))
    if gnorm <= tol:
        return theta
    raise ConvergenceError(
        f"Newton did not converge: |grad| = {gnorm:.3e} > {tol:.3e}",
        last_iterate=theta,
        gradient_norm=gnorm,
    )


def g_and_H(
    theta: np.ndarray,
    ledger: TrialLedger,
    X: np.ndarray | None = None,
    lam: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean-response map g and regularized empirical Hessian H at theta."""
    if lam <= 0.0:
        raise ValueError("lam must be positive")
    Z = _require_features(ledger, X)
    d = Z.shape[1]
    theta = np.asarray(theta, dtype=float)
    Za, Na, _ = _active(ledger, Z)
    if Za.shape[0] == 0:
        return lam * theta, lam * np.eye(d)
    u = Za @ theta
    s = _sigma(u)
    g = Za.T @ (Na * s) + lam * theta
    w = Na * s * (1.0 - s)
    H = (Za * w[:, None]).T @ Za + lam * np.eye(d)
    return g, H


def project_estimator(
    zeta_hat: np.ndarray,
    ledger: TrialLedger,
    X: np.ndarray | None = None,
    lam: float = 1.0,
    B: float = 10.0,
    max_iter: int = 500,
    fd_step: float = 1e-6,
) -> np.ndarray:
    """Projection of the unconstrained estimate onto the norm ball.

    Returns zeta_hat unchanged when it is already feasible (the objective is
    then zero).  Otherwise runs projected gradient descent with a central
    finite-difference gradient and Armijo backtracking, returning the best
    feasible iterate.
    """
    zeta = np.asarray(zeta_hat, dtype=float)
    if np.linalg.norm(zeta) <= B:
        return zeta.copy()
    if B == 0.0:
        return np.zeros_like(zeta)
    g_target, _ = g_and_H(zeta, ledger, X, lam)

    def objective(th):
        g, H = g_and_H(th, ledger, X, lam)
        v = g - g_target
        return float(math.sqrt(max(v @ np.linalg.solve(H, v), 0.0)))

    def project(th):
        n = np.linalg.norm(th)
        return th if n <= B else th * (B / n)

    theta = project(zeta)
    best, best_val = theta.copy(), objective(theta)
    val = best_val
    step_size = 1.0
    d = zeta.size
    for _ in range(max_iter):
        grad = np.empty(d)
        for k in range(d):
            e = np.zeros(d)
            e[k] = fd_step
            grad[k] = (objective(theta + e) - objective(theta - e)) / (2 * fd_step)
        gn = np.linalg.norm(grad)
        if gn < 1e-12:
            break
        alpha = step_size
        improved = False
        for _ in range(30):
            cand = project(theta - alpha * grad)
            cand_val = objective(cand)
            if cand_val <= val - 1e-4 * alpha * gn * gn:
                theta, val = cand, cand_val
                improved = True
                break
            alpha *= 0.5
        if not improved:
            break
        step_size = min(alpha * 2.0, 1.0)
        if val < best_val:
            best, best_val = theta.copy(), val
    return best


def jacobi_eigenvalues(V: np.ndarray, rel_tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending."""
    A = np.array(V, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("V must be square")
    if not np.allclose(A, A.T, atol=1e-10 * (1.0 + np.abs(A).max())):
        raise ValueError("V must be symmetric")
    n = A.shape[0]
    if n == 1:
        return A[0].copy()
    norm = np.linalg.norm(A)
    if norm == 0.0:
        return np.zeros(n)
    tol = rel_tol * norm
    for _ in range(max_sweeps):
        off = math.sqrt(max(np.sum(A * A) - np.sum(np.diag(A) ** 2), 0.0))
        if off <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= tol / (n * n):
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
    return np.sort(np.diag(A))


def lambda_min(V: np.ndarray) -> float:
    return float(jacobi_eigenvalues(V)[0])


def log_det(V: np.ndarray) -> float:
    """log-determinant of a symmetric positive definite matrix."""
    eig = jacobi_eigenvalues(V)
    if np.any(eig <= 0.0):
        raise ValueError("matrix is not positive definite")
    return float(np.sum(np.log(eig)))


def lambda_schedule(t: int) -> float:
    """Regularization weight schedule t^(-1/2)."""
    if t < 1:
        raise ValueError("t must be >= 1")
    return t ** (-0.5)
