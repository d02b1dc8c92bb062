"""Fixed-confidence identification of the best policy from noisy pairwise
preferences: adaptive design, benchmark samplers, and a replication harness."""

from .bench import BenchConfig, BenchResult, bench, export
from .divergence import bern_kl, bern_kl_binary, logistic, logistic_deriv
from .instances import (
    PreferenceInstance,
    StructuredModel,
    best_policy,
    from_bt,
    gen_structured32,
    gen_unstructured16,
    load_instance,
    save_instance,
    validate,
)
from .judges import ExternalJudge, JudgeError, SimulatedJudge, external_judge_session
from .rng import RngState, derive_seed
from .sampler import Engine, ExperimentConfig, ExperimentOutcome, run_llmpo
from .unstructured import (
    Allocation,
    characteristic_time,
    glr_statistic,
    informative_opponent,
    lower_bound_samples,
    optimal_allocation,
    rho_threshold,
)

__version__ = "0.1.0"
