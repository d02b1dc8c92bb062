"""Adaptive experiment engine: forced exploration, allocation tracking,
stopping evaluation, and the final decision.

One run is strictly sequential; independent runs share only immutable
inputs.  The engine hosts both the adaptive design method ("llm-po") and
the benchmark samplers, which differ only in pair selection and share the
stopping and decision machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .design import best_by_score, solve_allocation_weights
from .divergence import bern_kl, bern_kl_vec
from .estimation import TrialLedger, lambda_min, lambda_schedule, log_det, reg_mle, project_estimator
from .instances import PreferenceInstance, StructuredModel, canonical_pairs, from_bt
from .rng import RngState
from .unstructured import D_FLOOR, rho_threshold

__all__ = ["ExperimentConfig", "ExperimentOutcome", "Engine", "run_llmpo"]

BUDGET_EXHAUSTED = -1


@dataclass(frozen=True)
class ExperimentConfig:
    delta: float = 0.05
    mode: str = "unstructured"
    method: str = "llm-po"
    n0: int = 1
    c_prime: float = 0.1
    budget_cap: int = 30000
    threshold_mode: str = "heuristic"
    threshold_C: float = 1.0
    seed: int = 0
    check_every: int = 1
    refit_every: int = 1
    design_every: int = 10
    lambda_power: float = -0.5
    gamma_power: float = -0.125
    eps: float = 0.1
    alpha: float = 0.51
    estimator_B: float | None = None
    tracking: str = "cumulative"
    target_rule: str = "need"
    route_bonus: float = 3.0
    need_margin: float = 1.1
    need_floor: float = 0.02

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=seed)


@dataclass
class ExperimentOutcome:
    tau: int
    stopped: bool
    recommended: int
    correct: bool | None
    t_init: int
    grid_recommendations: dict[int, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "stopped": self.stopped,
            "recommended": self.recommended,
            "correct": self.correct,
            "t_init": self.t_init,
        }


def _plugin_best(mu_full: np.ndarray) -> int:
    K = mu_full.shape[0]
    off = mu_full + np.where(np.eye(K, dtype=bool), np.inf, 0.0)
    return int(np.argmax(off.min(axis=1)))


class Engine:
    """Single adaptive experiment run."""

    def __init__(
        self,
        judge,
        config: ExperimentConfig,
        K: int,
        X: np.ndarray | None = None,
        truth_best: int | None = None,
        grid: tuple[int, ...] = (),
        trace=None,
    ):
        if not (0.0 < config.delta < 0.5):
            raise ValueError("delta must lie in (0, 1/2)")
        if config.n0 < 1:
            raise ValueError("n0 must be >= 1")
        if config.mode not in ("unstructured", "structured"):
            raise ValueError(f"unknown mode: {config.mode!r}")
        if config.mode == "structured" and X is None:
            raise ValueError("structured mode requires policy features")
        self.judge = judge
        self.cfg = config
        self.K = K
        self.truth_best = truth_best
        self.grid = tuple(sorted(grid))
        self.trace = trace

        self.pairs = canonical_pairs(K)
        self.P = len(self.pairs)
        self.pair_idx = np.full((K, K), -1, dtype=int)
        for k, (i, j) in enumerate(self.pairs):
            self.pair_idx[i, j] = self.pair_idx[j, i] = k
        self.pair_rows = np.array([i for i, _ in self.pairs])
        self.pair_cols = np.array([j for _, j in self.pairs])

        self.X = None if X is None else np.asarray(X, dtype=float)
        self.ledger = TrialLedger(K, X=self.X if config.mode == "structured" else None)
        self.N_full = np.zeros((K, K))
        self.mu_full = np.full((K, K), 0.5)
        self.dmat = np.zeros((K, K))  # bern_kl(mu, 1/2), symmetric
        self.beats = np.zeros((K, K), dtype=bool)  # beats[j, i]: j beats i

        root = RngState(config.seed)
        self.rng = root.numpy_rng()  # strategy randomness

        # Structured-mode state
        self.theta_hat: np.ndarray | None = None
        self._last_fit_t = -1
        self.gate_c = 0.0
        self.t0 = 1
        if self.X is not None:
            diffs = self.X[:, None, :] - self.X[None, :, :]
            self.L = float(np.max(np.linalg.norm(diffs, axis=2)))
            self.B_est = config.estimator_B if config.estimator_B is not None else 10.0
        else:
            self.L = 0.0
            self.B_est = 0.0

        if config.tracking not in ("cumulative", "direct"):
            raise ValueError(f"unknown tracking rule: {config.tracking!r}")
        if config.target_rule not in ("need", "plugin"):
            raise ValueError(f"unknown target rule: {config.target_rule!r}")
        # Target allocation over canonical pairs (tracked by llm-po)
        self.target = np.full(self.P, 1.0 / self.P)
        self.cum_target = np.zeros(self.P)
        self._last_design_t = -1

        from .baselines import make_strategy  # local import avoids a cycle

        self.strategy = make_strategy(config.method, self)
        self.A0 = self._default_A0()

    # -- setup -----------------------------------------------------------

    def _default_A0(self) -> np.ndarray:
        if self.cfg.mode == "unstructured":
            return np.arange(self.P)
        # Greedy volume-maximizing spanning pairs; pairs joining the current
        # best are appended after the initial fit.
        Z = self.ledger.Z
        d = Z.shape[1]
        chosen: list[int] = []
        basis = np.zeros((0, d))
        for _ in range(d):
            resid = Z.copy()
            for b in basis:
                resid = resid - np.outer(resid @ b, b)
            norms = np.linalg.norm(resid, axis=1)
            norms[chosen] = -1.0
            k = int(np.argmax(norms))
            if norms[k] <= 1e-12:
                break
            chosen.append(k)
            v = resid[k] / norms[k]
            basis = np.vstack([basis, v])
        return np.array(sorted(chosen))

    # -- bookkeeping -----------------------------------------------------

    def _apply_outcome(self, k: int, outcome: int) -> None:
        self.ledger.record(self.pairs[k], outcome)
        i, j = self.pairs[k]
        self.N_full[i, j] += 1
        self.N_full[j, i] += 1
        n, w = self.ledger.N[k], self.ledger.W[k]
        p = w / n
        self.mu_full[i, j] = p
        self.mu_full[j, i] = 1.0 - p
        dval = bern_kl(p, 0.5)
        self.dmat[i, j] = self.dmat[j, i] = dval
        self.beats[i, j] = p > 0.5
        self.beats[j, i] = p < 0.5

    @property
    def t(self) -> int:
        return self.ledger.t

    def _query(self, k: int) -> int:
        i, j = self.pairs[k]
        outcome = self.judge.query(i, j)
        self._apply_outcome(k, outcome)
        return outcome

    # -- estimation ------------------------------------------------------

    def lambda_t(self) -> float:
        return max(self.t, 1) ** self.cfg.lambda_power

    def gamma_t(self) -> float:
        return max(self.t, 1) ** self.cfg.gamma_power

    def refit(self, force: bool = False) -> None:
        """Refresh the structured parameter estimate if stale."""
        if self.cfg.mode != "structured":
            return
        if not force and self._last_fit_t >= 0 and self.t - self._last_fit_t < self.cfg.refit_every:
            return
        zeta = reg_mle(self.ledger, lam=self.lambda_t(), warm_start=self.theta_hat)
        if np.linalg.norm(zeta) > self.B_est:
            zeta = project_estimator(zeta, self.ledger, lam=self.lambda_t(), B=self.B_est)
        self.theta_hat = zeta
        self._last_fit_t = self.t
        self._estimate_matrix_cache = None

    _estimate_matrix_cache: np.ndarray | None = None

    def estimate_matrix(self) -> np.ndarray:
        """Current pairwise mean estimate as a full K x K matrix."""
        if self.cfg.mode == "unstructured":
            return self.mu_full
        self.refit(force=self.theta_hat is None)
        if self._estimate_matrix_cache is None:
            scores = self.X @ self.theta_hat
            gap = scores[:, None] - scores[None, :]
            self._estimate_matrix_cache = 1.0 / (1.0 + np.exp(-gap))
        return self._estimate_matrix_cache

    def recommendation(self) -> int:
        if self.cfg.mode == "unstructured":
            return _plugin_best(self.mu_full)
        if self.theta_hat is None:
            self.refit(force=True)
        return best_by_score(self.theta_hat, self.X)

    # -- llm-po sampling rule --------------------------------------------

    def exploration_set(self) -> set[tuple[int, int]]:
        """Under-sampled exploration pairs: N_ij(t) < c' * sqrt(t)."""
        bound = self.cfg.c_prime * math.sqrt(max(self.t, 1))
        under = self.ledger.N[self.A0] < bound
        return {self.pairs[k] for k in self.A0[under]}

    def _unstructured_target(self) -> np.ndarray:
        """Empirical allocation weights over canonical pairs at mu_hat.

        Each suboptimal candidate's effort goes to a single opponent pair
        (the closed-form bottleneck structure).  Two finite-sample
        corrections, both of which vanish as counts grow:

        - the opponent is routed by an optimistic preference gap
          (mu_hat - 1/2) + route_bonus * se, so a strong but rarely
          sampled opponent can be discovered instead of being locked out
          by a noisy point estimate;
        - the 1/d weight is scaled by the candidate's remaining evidence
          gap max(need_margin * rho - Z_i, need_floor * rho), so effort
          concentrates on the candidates that still block stopping.
        """
        cfg = self.cfg
        i_hat = _plugin_best(self.mu_full)
        if cfg.target_rule == "plugin":
            masked = np.where(self.beats, self.dmat, -np.inf)
            d_star = masked.max(axis=0)
            j_tilde = masked.argmax(axis=0)
            weights = np.zeros(self.P)
            for i in range(self.K):
                if i == i_hat:
                    continue
                if d_star[i] > -np.inf:
                    opp, info = int(j_tilde[i]), float(d_star[i])
                else:
                    gaps = np.abs(self.mu_full[:, i] - 0.5)
                    gaps[i] = np.inf
                    opp, info = int(np.argmin(gaps)), 0.0
                weights[self.pair_idx[i, opp]] += 1.0 / max(info, D_FLOOR)
            return weights / weights.sum()

        n_pair = np.maximum(self.N_full, 1.0)
        se = 0.5 / np.sqrt(n_pair)
        gap_ucb = (self.mu_full - 0.5) + cfg.route_bonus * se
        np.fill_diagonal(gap_ucb, -np.inf)
        evid = (self.beats * self.N_full * self.dmat).sum(axis=0)
        rho = rho_threshold(cfg.delta, max(self.t, 2), "heuristic", cfg.threshold_C, self.P)
        weights = np.zeros(self.P)
        for i in range(self.K):
            if i == i_hat:
                continue
            opp = int(np.argmax(gap_ucb[:, i]))
            g = min(max(gap_ucb[opp, i], 1e-6), 0.499)
            info = max(bern_kl(0.5 + g, 0.5), D_FLOOR)
            need = max(cfg.need_margin * rho - evid[i], cfg.need_floor * rho)
            weights[self.pair_idx[i, opp]] += need / info
        return weights / weights.sum()

    def update_target(self) -> None:
        if self.cfg.mode == "unstructured":
            self.target = self._unstructured_target()
        else:
            if self._last_design_t >= 0 and self.t - self._last_design_t < self.cfg.design_every:
                return
            self.refit(force=True)
            try:
                w, _ = solve_allocation_weights(
                    self.theta_hat,
                    self.X,
                    gamma=self.gamma_t(),
                    warm_start=self.target,
                    max_iter=400,
                    polish=False,
                )
                self.target = w / w.sum()
            except ValueError:
                pass  # non-unique empirical argmax: keep the previous target
            self._last_design_t = self.t

    def next_pair(self) -> tuple[int, int]:
        """Forced exploration if any pair is under-sampled, else deficit tracking."""
        bound = self.cfg.c_prime * math.sqrt(max(self.t, 1))
        nA0 = self.ledger.N[self.A0]
        under = nA0 < bound
        if under.any():
            sub = self.A0[under]
            return self.pairs[int(sub[np.argmin(self.ledger.N[sub])])]
        if self.cfg.tracking == "cumulative":
            # Cumulative tracking: each pair accrues its per-step share of the
            # (time-varying) target, so no pair waits behind another's backlog.
            deficit = self.cum_target - self.ledger.N
        else:
            deficit = self.t * self.target - self.ledger.N
        return self.pairs[int(np.argmax(deficit))]

    # -- stopping --------------------------------------------------------

    def glr(self) -> float:
        if self.cfg.mode == "unstructured":
            i_hat = _plugin_best(self.mu_full)
            evid = (self.beats * self.N_full * self.dmat).sum(axis=0)
            evid[i_hat] = np.inf
            return float(evid.min())
        from .design import structured_glr

        return structured_glr(self.ledger, self.theta_hat, lambda_t=self.lambda_t())

    def threshold(self) -> float:
        cfg = self.cfg
        if cfg.mode == "unstructured" or cfg.threshold_mode == "heuristic":
            return rho_threshold(cfg.delta, max(self.t, 1), cfg.threshold_mode, cfg.threshold_C, self.P)
        from .design import beta_threshold

        return beta_threshold(
            cfg.delta,
            self.t,
            log_det(self.ledger.V),
            self.X.shape[1],
            self.gate_c,
            self.t0,
            self.lambda_t(),
            self.B_est,
            self.L,
        )

    def should_stop(self) -> tuple[bool, float, float]:
        if self.cfg.mode == "structured":
            self.refit(force=True)
            if lambda_min(self.ledger.V) < self.gate_c * math.sqrt(self.t):
                return False, math.nan, math.nan
        z = self.glr()
        thr = self.threshold()
        return z > thr, z, thr

    # -- main loop -------------------------------------------------------

    def _emit_trace(self, pair, outcome, z, thr):
        if self.trace is not None:
            self.trace(
                {
                    "t": self.t,
                    "pair": [int(pair[0]), int(pair[1])],
                    "outcome": int(outcome),
                    "Z": None if z is None or math.isnan(z) else z,
                    "threshold": None if thr is None or math.isnan(thr) else thr,
                    "target_nonzeros": int(np.count_nonzero(self.target))
                    if self.cfg.method == "llm-po"
                    else None,
                }
            )

    def _record_grid(self, grid_ptr: int, recs: dict[int, int]) -> int:
        while grid_ptr < len(self.grid) and self.t >= self.grid[grid_ptr]:
            if self.cfg.mode == "structured":
                self.refit(force=True)
            recs[self.grid[grid_ptr]] = self.recommendation()
            grid_ptr += 1
        return grid_ptr

    def run(self) -> ExperimentOutcome:
        cfg = self.cfg
        grid_ptr = 0
        grid_recs: dict[int, int] = {}

        # Initialization: n0 samples per exploration pair.
        for k in self.A0:
            for _ in range(cfg.n0):
                if self.t >= cfg.budget_cap:
                    break
                out = self._query(int(k))
                self._emit_trace(self.pairs[int(k)], out, None, None)
                grid_ptr = self._record_grid(grid_ptr, grid_recs)
        if cfg.mode == "structured" and self.t < cfg.budget_cap:
            # Extend A0 with the pairs joining the initial empirical best,
            # then calibrate the eigenvalue gate at the end of initialization.
            self.refit(force=True)
            i_hat = best_by_score(self.theta_hat, self.X)
            extra = [
                self.pair_idx[min(i_hat, j), max(i_hat, j)]
                for j in range(self.K)
                if j != i_hat
            ]
            merged = sorted(set(self.A0.tolist()) | set(int(e) for e in extra))
            for k in merged:
                while self.ledger.N[k] < cfg.n0 and self.t < cfg.budget_cap:
                    out = self._query(int(k))
                    self._emit_trace(self.pairs[int(k)], out, None, None)
                    grid_ptr = self._record_grid(grid_ptr, grid_recs)
            self.A0 = np.array(merged)
            self.t0 = max(self.t, 1)
            lam = lambda_min(self.ledger.V)
            self.gate_c = 0.5 * lam / math.sqrt(self.t0)

        stopped = False
        while self.t < cfg.budget_cap:
            pair = self.strategy.select(self)
            k = self.pair_idx[pair]
            out = self._query(int(k))
            grid_ptr = self._record_grid(grid_ptr, grid_recs)
            z = thr = math.nan
            if self.t % cfg.check_every == 0 and (cfg.mode == "unstructured" or self.t >= self.t0):
                stop, z, thr = self.should_stop()
                if stop:
                    stopped = True
            self._emit_trace(pair, out, z, thr)
            if stopped:
                break

        if cfg.mode == "structured":
            self.refit(force=True)
        rec = self.recommendation()
        while grid_ptr < len(self.grid):
            grid_recs[self.grid[grid_ptr]] = rec
            grid_ptr += 1
        outcome = ExperimentOutcome(
            tau=self.t if stopped else BUDGET_EXHAUSTED,
            stopped=stopped,
            recommended=rec,
            correct=None if self.truth_best is None else rec == self.truth_best,
            t_init=int(self.t0 if cfg.mode == "structured" else cfg.n0 * len(self.A0)),
            grid_recommendations=grid_recs,
        )
        if self.trace is not None:
            self.trace({"outcome": outcome.to_dict()})
        return outcome


def run_llmpo(instance_or_judge, config: ExperimentConfig, **kwargs) -> ExperimentOutcome:
    """Run one adaptive experiment on an instance (simulated judge) or a judge.

    When given a PreferenceInstance or StructuredModel, a simulated judge is
    built from the run seed; mode and features are inferred from the instance.
    """
    from .judges import SimulatedJudge

    if isinstance(instance_or_judge, PreferenceInstance):
        mu = instance_or_judge.mu
        config = replace(config, mode="unstructured")
        judge = SimulatedJudge(mu, RngState(config.seed).spawn().numpy_rng())
        truth = kwargs.pop("truth_best", _plugin_best(mu))
        return Engine(judge, config, mu.shape[0], truth_best=truth, **kwargs).run()
    if isinstance(instance_or_judge, StructuredModel):
        model = instance_or_judge
        mu = from_bt(model).mu
        if config.estimator_B is None:
            config = replace(config, estimator_B=5.0 * float(np.linalg.norm(model.theta)))
        config = replace(config, mode="structured")
        judge = SimulatedJudge(mu, RngState(config.seed).spawn().numpy_rng())
        truth = kwargs.pop("truth_best", best_by_score(model.theta, model.X))
        return Engine(judge, config, model.K, X=model.X, truth_best=truth, **kwargs).run()
    return Engine(instance_or_judge, config, **kwargs).run()
