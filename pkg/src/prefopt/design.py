"""Fisher-information design for the structured policy space.

Contains the design objective, the regularized max-min allocation solver,
the structured stopping statistic, and its threshold.
"""

from __future__ import annotations

import math

import numpy as np

from .divergence import logistic_deriv
from .estimation import TrialLedger, g_and_H
from .instances import canonical_pairs
from .unstructured import Allocation

__all__ = [
    "RIDGE",
    "project_to_simplex",
    "fisher_matrix",
    "gap_ratio",
    "solve_allocation",
    "solve_allocation_weights",
    "surrogate_time",
    "structured_glr",
    "beta_threshold",
    "best_by_score",
]

# H(theta, omega) is singular whenever the allocation support does not span
# the feature space; the ridge keeps the design objective defined on the
# whole simplex at an O(1e-10 * |z|^2) perturbation.
RIDGE = 1e-10


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-and-threshold)."""
    v = np.asarray(v, dtype=float)
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u + (1.0 - css) / np.arange(1, n + 1) > 0)[0][-1]
    tau = (css[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def best_by_score(theta: np.ndarray, X: np.ndarray, require_unique: bool = False) -> int:
    scores = np.asarray(X, dtype=float) @ np.asarray(theta, dtype=float)
    best = int(np.argmax(scores))
    if require_unique and np.sum(scores == scores[best]) > 1:
        raise ValueError("score argmax is not unique")
    return best


def _pair_diffs(X: np.ndarray) -> tuple[list[tuple[int, int]], np.ndarray]:
    X = np.asarray(X, dtype=float)
    pairs = canonical_pairs(X.shape[0])
    Z = np.array([X[i] - X[j] for (i, j) in pairs])
    return pairs, Z

def _sigma_prime(u: np.ndarray) -> np.ndarray:
    # sigma' is even, so evaluate on |u| for stability
    e = np.exp(-np.abs(u))
    s = 1.0 / (1.0 + e)
    return s * (1.0 - s)


def _fisher_from_weights(theta: np.ndarray, weights: np.ndarray, Z: np.ndarray) -> np.ndarray:
    w = weights * _sigma_prime(Z @ theta)
    d = Z.shape[1]
    return (Z * w[:, None]).T @ Z + RIDGE * np.eye(d)


def fisher_matrix(theta: np.ndarray, omega: Allocation, X: np.ndarray) -> np.ndarray:
    """Fisher information of the preference model under sampling proportions omega."""
    pairs, Z = _pair_diffs(X)
    index = {p: k for k, p in enumerate(pairs)}
    weights = np.zeros(len(pairs))
    for p, w in omega.weights.items():
        weights[index[p]] = w
    return _fisher_from_weights(np.asarray(theta, dtype=float), weights, Z)


def gap_ratio(theta: np.ndarray, omega: Allocation, X: np.ndarray, i: int) -> float:
    """Squared score gap of policy i to the best, normalized by design precision."""
    theta = np.asarray(theta, dtype=float)
    X = np.asarray(X, dtype=float)
    star = best_by_score(theta, X)
    if i == star:
        raise ValueError("gap_ratio is defined for suboptimal policies only")
    z = X[i] - X[star]
    H = fisher_matrix(theta, omega, X)
    try:
        w = np.linalg.solve(H, z)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"design matrix numerically singular along z_{i}") from exc
    q = float(z @ w)
    num = float(theta @ z) ** 2
    return num / (2.0 * q)


def _min_gap_objective(
    theta: np.ndarray, weights: np.ndarray, Z_all: np.ndarray, Zsub: np.ndarray, gaps_sq: np.ndarray
) -> tuple[float, int, np.ndarray]:
    """Returns (min_i psi_i, active index, H^-1 applied to each separating direction)."""
    H = _fisher_from_weights(theta, weights, Z_all)
    Wsol = np.linalg.solve(H, Zsub.T)  # d x m
    quad = np.einsum("ij,ji->i", Zsub, Wsol)
    psi = gaps_sq / (2.0 * quad)
    active = int(np.argmin(psi))
    return float(psi[active]), active, Wsol


def _polish_epigraph(
    gamma: float,
    w0: np.ndarray,
    Z_all: np.ndarray,
    Zsub: np.ndarray,
    gaps_sq: np.ndarray,
    sp: np.ndarray,
) -> np.ndarray | None:
    """Refine an allocation by solving the smooth epigraph program.

    Variables (w, z); maximize z - gamma/2 |w|^2 subject to psi_i(w) >= z on
    the simplex.  Returns None when no SQP solver is available.
    """
    try:
        from scipy.optimize import minimize
    except ImportError:  # pragma: no cover - scipy is a standard install
        return None
    P = Z_all.shape[0]
    d = Z_all.shape[1]

    def psi_and_grads(w):
        H = (Z_all * (w * sp)[:, None]).T @ Z_all + RIDGE * np.eye(d)
        Wsol = np.linalg.solve(H, Zsub.T)  # d x m
        quad = np.einsum("ij,ji->i", Zsub, Wsol)
        psi = gaps_sq / (2.0 * quad)
        grads = gaps_sq[None, :] * sp[:, None] * (Z_all @ Wsol) ** 2 / (2.0 * quad**2)[None, :]
        return psi, grads  # grads[:, i] = d psi_i / d w

    def objective(x):
        w, z = x[:P], x[P]
        return -(z - 0.5 * gamma * float(w @ w))

    def objective_grad(x):
        g = np.empty(P + 1)
        g[:P] = gamma * x[:P]
        g[P] = -1.0
        return g

    def ineq(x):
        psi, _ = psi_and_grads(x[:P])
        return psi - x[P]

    def ineq_jac(x):
        _, grads = psi_and_grads(x[:P])
        J = np.empty((Zsub.shape[0], P + 1))
        J[:, :P] = grads.T
        J[:, P] = -1.0
        return J

    psi0, _ = psi_and_grads(w0)
    x0 = np.concatenate([w0, [float(psi0.min())]])
    res = minimize(
        objective,
        x0,
        jac=objective_grad,
        method="SLSQP",
        bounds=[(0.0, 1.0)] * P + [(None, None)],
        constraints=[
            {"type": "eq", "fun": lambda x: x[:P].sum() - 1.0,
             "jac": lambda x: np.concatenate([np.ones(P), [0.0]])},
            {"type": "ineq", "fun": ineq, "jac": ineq_jac},
        ],
        options={"maxiter": 200, "ftol": 1e-12},
    )
    if not res.success:
        return None
    w = np.maximum(res.x[:P], 0.0)
    return w / w.sum()


def solve_allocation_weights(
    theta: np.ndarray,
    X: np.ndarray,
    gamma: float = 0.0,
    warm_start: np.ndarray | None = None,
    max_iter: int = 5000,
    patience: int = 50,
    improve_tol: float = 1e-9,
    polish: bool = True,
) -> tuple[np.ndarray, float]:
    """Array-form allocation solver; returns (weights over canonical pairs, min_i psi_i).

    Projected supergradient ascent on the simplex with step 0.5/sqrt(k);
    the supergradient of the min is the gradient of the lowest-index active
    term.  Tracks the best iterate and, when `polish` is set, refines it with
    a sequential-quadratic-programming pass on the epigraph formulation.
    """
    if gamma < 0.0:
        raise ValueError("gamma must be nonnegative")
    theta = np.asarray(theta, dtype=float)
    X = np.asarray(X, dtype=float)
    star = best_by_score(theta, X, require_unique=True)
    pairs, Z_all = _pair_diffs(X)
    P = len(pairs)
    sub = [i for i in range(X.shape[0]) if i != star]
    Zsub = np.array([X[i] - X[star] for i in sub])
    gaps_sq = (Zsub @ theta) ** 2
    sp = _sigma_prime(Z_all @ theta)

    if warm_start is not None:
        w = project_to_simplex(np.asarray(warm_start, dtype=float))
    else:
        w = np.full(P, 1.0 / P)

    def full_objective(wts):
        val, active, Wsol = _min_gap_objective(theta, wts, Z_all, Zsub, gaps_sq)
        return val - 0.5 * gamma * float(wts @ wts), val, active, Wsol

    obj, val, active, Wsol = full_objective(w)
    if not np.isfinite(obj):
        raise FloatingPointError("design objective is not finite at the initial point")
    best_w, best_obj, best_val = w.copy(), obj, val
    stall = 0
    for k in range(1, max_iter + 1):
        # d psi_active / d w_ab = gap^2 * sigma'(u_ab) * (z_a^T H^-1 z_ab)^2 / (2 q^2)
        hz = Wsol[:, active]  # H^-1 z_active
        q = float(Zsub[active] @ hz)
        grad = gaps_sq[active] * sp * (Z_all @ hz) ** 2 / (2.0 * q * q)
        grad -= gamma * w
        w = project_to_simplex(w + (0.5 / math.sqrt(k)) * grad)
        obj, val, active, Wsol = full_objective(w)
        if not np.isfinite(obj):
            raise FloatingPointError(f"design objective became non-finite at iterate {k}: {w}")
        if obj > best_obj + improve_tol:
            best_w, best_obj, best_val = w.copy(), obj, val
            stall = 0
        else:
            stall += 1
            if stall >= patience:
                break
    if polish:
        refined = _polish_epigraph(gamma, best_w, Z_all, Zsub, gaps_sq, sp)
        if refined is not None:
            obj, val, active, Wsol = full_objective(refined)
            if obj >= best_obj:
                best_w, best_obj, best_val = refined, obj, val
    return best_w, best_val


def solve_allocation(
    theta: np.ndarray,
    X: np.ndarray,
    gamma: float = 0.0,
    **kwargs,
) -> Allocation:
    """Regularized max-min design allocation over canonical pairs."""
    w, _ = solve_allocation_weights(theta, X, gamma, **kwargs)
    pairs = canonical_pairs(np.asarray(X).shape[0])
    total = float(w.sum())
    return Allocation({p: float(wi) / total for p, wi in zip(pairs, w) if wi > 0.0})


def surrogate_time(theta: np.ndarray, X: np.ndarray) -> float:
    """Reciprocal of the unregularized max-min design value."""
    _, val = solve_allocation_weights(theta, X, gamma=0.0)
    return 1.0 / val


def structured_glr(
    ledger: TrialLedger,
    theta_hat: np.ndarray,
    X: np.ndarray | None = None,
    lambda_t: float = 1.0,
) -> float:
    """Evidence statistic: smallest precision-normalized squared score gap.

    Uses the empirical regularized Hessian on raw counts, so the statistic
    scales linearly with the sample size.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    feats = ledger.X if X is None else np.asarray(X, dtype=float)
    if feats is None:
        raise ValueError("structured GLR requires policy features")
    _, H = g_and_H(theta_hat, ledger, X, lambda_t)
    star = best_by_score(theta_hat, feats)
    Zsub = np.array([feats[i] - feats[star] for i in range(feats.shape[0]) if i != star])
    gaps_sq = (Zsub @ theta_hat) ** 2
    quad = np.einsum("ij,ji->i", Zsub, np.linalg.solve(H, Zsub.T))
    return float(np.min(gaps_sq / (2.0 * quad)))


def beta_threshold(
    delta: float,
    t: int,
    V_t_logdet: float,
    d: int,
    c: float,
    t0: int,
    lambda_t: float,
    B: float,
    L: float,
) -> float:
    """Stopping threshold for the structured test, from the self-normalized bound.

    The eigenvalue gate function is lam(t) = c*sqrt(t) with lam0 = lam(t0);
    m0 is the logistic curvature floor sigma'(B*L), exact because sigma' is
    even and decreasing in |u|.
    """
    if t < t0:
        raise ValueError(f"beta threshold requires t >= t0 (got t={t}, t0={t0})")
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    lam_t_gate = c * math.sqrt(t)
    lam0 = c * math.sqrt(t0)
    ratio = lam0 / lam_t_gate
    psi = (1.0 + ratio) * (
        2.0 * math.log(1.0 / delta)
        + (V_t_logdet - d * math.log(lam_t_gate))
        + d * math.log(1.0 + ratio)
        + d * math.log(lam_t_gate / lam0)
    )
    m0 = logistic_deriv(B * L)
    return (2.0 * (1.0 + 2.0 * L * B) * (math.sqrt(max(psi, 0.0) / m0) + math.sqrt(lambda_t) * B)) ** 2
