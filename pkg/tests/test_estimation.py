"""Regularized Bradley-Terry estimation and small dense linear algebra."""

import numpy as np
import pytest

from prefopt.estimation import (
    ConvergenceError,
    TrialLedger,
    g_and_H,
    jacobi_eigenvalues,
    lambda_min,
    lambda_schedule,
    log_det,
    project_estimator,
    reg_mle,
)

# Root of sigma(theta) + theta = 1, by 50-digit bisection.
SCALAR_MLE_ROOT = 0.40105813754154703565


def _ledger_with(K, X, records):
    led = TrialLedger(K, X=X)
    for pair, outcome in records:
        led.record(pair, outcome)
    return led


def _loglik(theta, ledger, lam):
    """Regularized log-likelihood written out independently of the solver."""
    total = 0.0
    for k, (i, j) in enumerate(ledger.pairs):
        n, w = ledger.N[k], ledger.W[k]
        if n == 0:
            continue
        u = float(ledger.Z[k] @ theta)
        p = 1.0 / (1.0 + np.exp(-u))
        total += w * np.log(p) + (n - w) * np.log(1.0 - p)
    return total - 0.5 * lam * float(theta @ theta)


def test_ledger_bookkeeping():
    X = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    led = _ledger_with(3, X, [((0, 1), 1), ((0, 1), 0), ((1, 2), 1)])
    assert led.t == 3
    assert led.N[led.pair_index[(0, 1)]] == 2
    assert led.W[led.pair_index[(0, 1)]] == 1
    counts = led.counts_matrix()
    assert counts[0, 1] == counts[1, 0] == 2
    mu = led.mu_hat_matrix()
    assert mu[0, 1] == 0.5 and mu[1, 2] == 1.0 and mu[0, 2] == 0.5
    # V accumulates z z^T per record.
    z01, z12 = X[0] - X[1], X[1] - X[2]
    expect = 2 * np.outer(z01, z01) + np.outer(z12, z12)
    assert np.allclose(led.V, expect)


def test_ledger_rejects_bad_records():
    led = TrialLedger(3)
    with pytest.raises(ValueError):
        led.record((1, 0), 1)
    with pytest.raises(ValueError):
        led.record((0, 1), 2)


def test_reg_mle_empty_ledger():
    X = np.array([[1.0], [0.0]])
    assert np.array_equal(reg_mle(TrialLedger(2, X=X), lam=1.0), np.zeros(1))


def test_reg_mle_scalar_case_matches_bisection_oracle():
    X = np.array([[1.0], [0.0]])
    led = _ledger_with(2, X, [((0, 1), 1)])
    zeta = reg_mle(led, lam=1.0)
    assert zeta[0] == pytest.approx(SCALAR_MLE_ROOT, abs=1e-8)


def test_reg_mle_balanced_data_is_zero():
    X = np.array([[1.0], [0.0]])
    led = _ledger_with(2, X, [((0, 1), 1), ((0, 1), 0)] * 10)
    assert np.allclose(reg_mle(led, lam=0.7), 0.0, atol=1e-10)


def test_reg_mle_requires_positive_lambda():
    X = np.array([[1.0], [0.0]])
    with pytest.raises(ValueError):
        reg_mle(TrialLedger(2, X=X), lam=0.0)


def test_reg_mle_norm_monotone_in_lambda(rng):
    X = rng.normal(size=(4, 2))
    records = [((i, j), int(rng.random() < 0.7)) for i in range(4) for j in range(i + 1, 4) for _ in range(15)]
    led = _ledger_with(4, X, records)
    norms = [np.linalg.norm(reg_mle(led, lam=lam)) for lam in (0.01, 0.1, 1.0, 10.0, 100.0)]
    assert all(b <= a + 1e-9 for a, b in zip(norms, norms[1:]))


def test_reg_mle_local_optimality(rng):
    X = rng.normal(size=(4, 3))
    records = [((i, j), int(rng.random() < 0.6)) for i in range(4) for j in range(i + 1, 4) for _ in range(10)]
    led = _ledger_with(4, X, records)
    lam = 0.5
    zeta = reg_mle(led, lam=lam)
    at_opt = _loglik(zeta, led, lam)
    for _ in range(100):
        eta = rng.normal(size=3)
        eta *= 1e-2 / np.linalg.norm(eta)
        assert _loglik(zeta + eta, led, lam) <= at_opt + 1e-12


def test_reg_mle_nonconvergence_error_carries_state():
    X = np.array([[1.0], [0.0]])
    led = _ledger_with(2, X, [((0, 1), 1)] * 50)
    with pytest.raises(ConvergenceError) as exc:
        reg_mle(led, lam=1.0, max_iter=0)
    assert exc.value.gradient_norm > 0.0
    assert exc.value.last_iterate.shape == (1,)


def test_g_and_H_frozen_example():
    X = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    led = _ledger_with(2, X, [((0, 1), 1)])
    g, H = g_and_H(np.zeros(3), led, lam=0.5)
    assert np.allclose(g, np.array([0.5, 0.0, 0.0]), atol=1e-15)
    expect_H = 0.25 * np.outer(X[0], X[0]) + 0.5 * np.eye(3)
    assert np.allclose(H, expect_H, atol=1e-15)
    assert np.allclose(H, H.T)


def test_g_and_H_jacobian_identity(rng):
    # H is the Jacobian of the mean-response map g.
    X = rng.normal(size=(5, 3))
    records = [((i, j), int(rng.random() < 0.5)) for i in range(5) for j in range(i + 1, 5) for _ in range(4)]
    led = _ledger_with(5, X, records)
    lam = 0.3
    h = 1e-6
    for _ in range(5):
        theta = rng.normal(size=3)
        _, H = g_and_H(theta, led, lam=lam)
        J = np.empty((3, 3))
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            gp, _ = g_and_H(theta + e, led, lam=lam)
            gm, _ = g_and_H(theta - e, led, lam=lam)
            J[:, k] = (gp - gm) / (2 * h)
        assert np.allclose(J, H, rtol=1e-5, atol=1e-7)


def test_project_estimator_feasible_passthrough(rng):
    X = rng.normal(size=(3, 2))
    led = _ledger_with(3, X, [((0, 1), 1), ((1, 2), 0)])
    zeta = np.array([0.3, -0.1])
    assert np.array_equal(project_estimator(zeta, led, lam=1.0, B=10.0), zeta)
    assert np.array_equal(project_estimator(zeta, led, lam=1.0, B=0.0), np.zeros(2))


def test_project_estimator_scalar_boundary():
    X = np.array([[1.0], [0.0]])
    led = _ledger_with(2, X, [((0, 1), 1)])
    theta = project_estimator(np.array([2.0]), led, lam=0.5, B=1.0)
    # Scalar g is strictly increasing, so the boundary point closest to the
    # unconstrained estimate wins; confirm against a grid scan.
    grid = np.linspace(-1.0, 1.0, 20001)
    g_target, _ = g_and_H(np.array([2.0]), led, lam=0.5)

    def obj(th):
        g, H = g_and_H(np.array([th]), led, lam=0.5)
        v = g - g_target
        return float(np.sqrt(v @ np.linalg.solve(H, v)))

    grid_best = grid[int(np.argmin([obj(t) for t in grid]))]
    assert grid_best == pytest.approx(1.0, abs=1e-4)
    assert theta[0] == pytest.approx(1.0, abs=1e-3)
    assert np.linalg.norm(theta) <= 1.0 + 1e-12


def test_jacobi_eigenvalues_known_matrices():
    assert np.allclose(jacobi_eigenvalues(np.eye(3)), np.ones(3))
    assert np.allclose(jacobi_eigenvalues(np.diag([5.0, 2.0])), [2.0, 5.0])
    assert np.allclose(jacobi_eigenvalues(np.array([[2.0, 1.0], [1.0, 2.0]])), [1.0, 3.0])
    assert lambda_min(np.array([[2.0, 1.0], [1.0, 2.0]])) == pytest.approx(1.0, abs=1e-10)


def test_jacobi_eigenvalues_match_library(rng):
    for d in (2, 4, 7):
        for _ in range(10):
            A = rng.normal(size=(d, d))
            S = A + A.T
            assert np.allclose(jacobi_eigenvalues(S), np.linalg.eigvalsh(S), atol=1e-9)


def test_jacobi_rejects_bad_input():
    with pytest.raises(ValueError):
        jacobi_eigenvalues(np.ones((2, 3)))
    with pytest.raises(ValueError):
        jacobi_eigenvalues(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_log_det(rng):
    A = rng.normal(size=(4, 4))
    S = A @ A.T + 0.5 * np.eye(4)
    sign, ref = np.linalg.slogdet(S)
    assert sign > 0
    assert log_det(S) == pytest.approx(ref, abs=1e-9)
    with pytest.raises(ValueError):
        log_det(np.diag([1.0, -1.0]))


def test_lambda_schedule():
    assert lambda_schedule(1) == 1.0
    assert lambda_schedule(4) == 0.5
    assert lambda_schedule(10_000) == pytest.approx(0.01)
    with pytest.raises(ValueError):
        lambda_schedule(0)
