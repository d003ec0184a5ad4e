"""Parallel deflation for low-rank bilinear regression."""
from .core import (
    ProblemInstance,
    SpectralProfile,
    generate_instance,
    make_spectral_profile,
    spectral_gaps,
    tail_sum,
    top_svd,
)
from .deflation import (
    DeflationRun,
    ParallelConfig,
    exact_sequential_targets,
    parallel_deflate,
    project_frobenius,
    reconstruct_weight,
    sequential_deflate,
)
from .metrics import DeflationTrace, decompose_errors, ideal_rank1_fit, nash_residual
from .rank1 import ComponentPair, Rank1Config, estimate_contraction, rank1_als, rank1_gd
from .theory import (
    convergence_envelope,
    effective_rates,
    fit_decay,
    lambert_w_neg1,
    noise_floor,
    noiseless_bound,
    rate_plan,
    self_correction_envelope,
    surrogate_sequences,
    w_hat,
    warmup_schedule,
)

__version__ = "0.1.0"

__all__ = [
    "ComponentPair",
    "DeflationRun",
    "DeflationTrace",
    "ParallelConfig",
    "ProblemInstance",
    "Rank1Config",
    "SpectralProfile",
    "convergence_envelope",
    "decompose_errors",
    "effective_rates",
    "estimate_contraction",
    "exact_sequential_targets",
    "fit_decay",
    "generate_instance",
    "ideal_rank1_fit",
    "lambert_w_neg1",
    "make_spectral_profile",
    "nash_residual",
    "noise_floor",
    "noiseless_bound",
    "parallel_deflate",
    "project_frobenius",
    "rank1_als",
    "rank1_gd",
    "rate_plan",
    "reconstruct_weight",
    "self_correction_envelope",
    "sequential_deflate",
    "spectral_gaps",
    "surrogate_sequences",
    "tail_sum",
    "top_svd",
    "w_hat",
    "warmup_schedule",
]
