"""Closed-form allocation, characteristic time, GLR statistic, thresholds."""

import math

import numpy as np
import pytest

from prefopt.instances import PreferenceInstance, gen_unstructured16
from prefopt.rng import RngState
from prefopt.unstructured import (
    NoUniqueBestError,
    characteristic_time,
    glr_statistic,
    glr_statistic_from_matrices,
    informative_opponent,
    lower_bound_samples,
    optimal_allocation,
    rho_threshold,
)

# 50-digit reference values.
KL_08 = 0.19274475702175742988  # d(0.8, 1/2)
KL_07 = 0.082282878505051846392  # d(0.7, 1/2)
KL_06 = 0.020135513550688873421  # d(0.6, 1/2)
W01_K3 = 0.29918040180740686455  # (1/KL_08) / (1/KL_08 + 1/KL_07)
TSTAR_K3 = 17.341405177627275524  # 1/KL_08 + 1/KL_07
LB_K2_005 = 13.748727188209116610  # (1/KL_08) * kl(0.05, 0.95)


def _mat(K, entries):
    mu = np.full((K, K), 0.5)
    for (i, j), p in entries.items():
        mu[i, j] = p
        mu[j, i] = 1.0 - p
    return PreferenceInstance(mu)


@pytest.fixture
def k3():
    # Policy 0 beats both others; 1 beats 2.
    return _mat(3, {(0, 1): 0.8, (0, 2): 0.7, (1, 2): 0.6})


def test_informative_opponent_k3(k3):
    info1 = informative_opponent(k3, 1)
    assert info1.opponent == 0
    assert info1.info == pytest.approx(KL_08, abs=1e-14)
    info2 = informative_opponent(k3, 2)
    # Policy 2 is beaten by 0 (at 0.7) and 1 (at 0.6); 0 is more informative.
    assert info2.opponent == 0
    assert info2.info == pytest.approx(KL_07, abs=1e-14)


def test_informative_opponent_empty_beating_set(k3):
    # Nobody beats the best policy: info 0, opponent closest to the boundary.
    info = informative_opponent(k3, 0)
    assert info.info == 0.0
    assert info.opponent == 2  # mu(2, 0) = 0.3 is nearer 1/2 than mu(1, 0) = 0.2


def test_optimal_allocation_k3(k3):
    alloc = optimal_allocation(k3)
    assert alloc[(0, 1)] == pytest.approx(W01_K3, abs=1e-12)
    assert alloc[(0, 2)] == pytest.approx(1.0 - W01_K3, abs=1e-12)
    assert alloc[(1, 2)] == 0.0


def test_optimal_allocation_k2():
    alloc = optimal_allocation(_mat(2, {(0, 1): 0.8}))
    assert alloc[(0, 1)] == pytest.approx(1.0, abs=1e-12)


def test_optimal_allocation_symmetric():
    inst = _mat(3, {(0, 1): 0.8, (0, 2): 0.8, (1, 2): 0.5})
    alloc = optimal_allocation(inst)
    assert alloc[(0, 1)] == pytest.approx(0.5, abs=1e-12)
    assert alloc[(0, 2)] == pytest.approx(0.5, abs=1e-12)


def test_optimal_allocation_simplex_and_support():
    inst = gen_unstructured16(RngState(3))
    alloc = optimal_allocation(inst)
    weights = np.array(list(alloc.weights.values()))
    assert weights.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(weights >= 0.0)
    assert np.count_nonzero(weights) <= inst.K - 1


def test_optimal_allocation_requires_unique_best():
    cyc = _mat(3, {(0, 1): 0.6, (1, 2): 0.6, (0, 2): 0.4})
    with pytest.raises(NoUniqueBestError):
        optimal_allocation(cyc)
    with pytest.raises(NoUniqueBestError):
        characteristic_time(cyc)


def test_characteristic_time_values(k3):
    assert characteristic_time(k3) == pytest.approx(TSTAR_K3, rel=1e-12)
    k2 = _mat(2, {(0, 1): 0.8})
    assert characteristic_time(k2) == pytest.approx(1.0 / KL_08, rel=1e-12)
    assert lower_bound_samples(k2, 0.05) == pytest.approx(LB_K2_005, rel=1e-12)


def test_characteristic_time_permutation_invariant(rng):
    inst = gen_unstructured16(RngState(6), K=6)
    perm = rng.permutation(6)
    permuted = PreferenceInstance(inst.mu[np.ix_(perm, perm)])
    assert characteristic_time(permuted) == pytest.approx(characteristic_time(inst), rel=1e-10)


def test_glr_k2():
    counts = np.array([[0.0, 10.0], [10.0, 0.0]])
    z = glr_statistic(counts, _mat(2, {(0, 1): 0.8}))
    assert z == pytest.approx(10.0 * KL_08, rel=1e-12)
    assert glr_statistic(counts, _mat(2, {(0, 1): 0.5})) == 0.0


def test_glr_k2_matches_scan_oracle():
    # Direct minimization of N * d(mu_hat, lam) over alternatives lam <= 1/2,
    # evaluated on a 1e-6 grid with the two-term formula written out.
    mu_hat = 0.8
    lams = np.linspace(1e-6, 0.5, 500_001)
    kl = mu_hat * np.log(mu_hat / lams) + (1 - mu_hat) * np.log((1 - mu_hat) / (1 - lams))
    oracle = 10.0 * kl.min()
    counts = np.array([[0.0, 10.0], [10.0, 0.0]])
    z = glr_statistic(counts, _mat(2, {(0, 1): mu_hat}))
    assert z == pytest.approx(oracle, abs=1e-9)


def test_glr_k3(k3):
    counts = np.zeros((3, 3))
    counts[0, 1] = counts[1, 0] = 30.0
    counts[0, 2] = counts[2, 0] = 30.0
    z = glr_statistic(counts, k3)
    assert z == pytest.approx(min(30.0 * KL_08, 30.0 * KL_07), rel=1e-12)


def test_glr_zero_when_candidate_unbeaten():
    # Candidate 2 sits at exactly 1/2 against everyone: no evidence, Z = 0.
    inst = _mat(3, {(0, 1): 0.9, (0, 2): 0.5, (1, 2): 0.5})
    counts = np.full((3, 3), 50.0)
    np.fill_diagonal(counts, 0.0)
    assert glr_statistic(counts, inst) == 0.0


def test_glr_from_matrices_matches_wrapper(k3):
    counts = np.zeros((3, 3))
    counts[0, 1] = counts[1, 0] = 12.0
    counts[1, 2] = counts[2, 1] = 7.0
    assert glr_statistic(counts, k3) == glr_statistic_from_matrices(counts, k3.mu)


def test_rho_heuristic_values():
    assert rho_threshold(0.05, 1) == pytest.approx(2.0 * math.log(20.0), rel=1e-14)
    vals = [rho_threshold(0.05, t) for t in range(1, 2000)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_rho_theoretical_value():
    delta = math.exp(-1.0)
    assert rho_threshold(delta, 1, mode="theoretical", C=1.0, S_size=1) == pytest.approx(
        1.0, abs=1e-12
    )


def test_rho_validation():
    with pytest.raises(ValueError):
        rho_threshold(0.05, 0)
    with pytest.raises(ValueError):
        rho_threshold(1.5, 10)
    with pytest.raises(ValueError):
        rho_threshold(0.05, 10, mode="nope")
