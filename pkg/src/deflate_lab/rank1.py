"""Warm-startable rank-1 solvers for ``min 1/2 ||Y_k - b a^T X||_F^2``.

Both solvers work on the moments ``M = X X^T`` and ``N = Y_k X^T``.  The
represented object is the product ``b a^T``; the split of scale between the
two factors is not canonical and is never normalized here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .core import STREAM_PROBE, has_degenerate_gap, rng_for
from .errors import (
    DegenerateGapError,
    DegenerateInputError,
    DivergenceError,
    ParameterError,
    WarmStartError,
)

WARM_START_TOL = 1e-14
PROBE_RADIUS = 0.1


@dataclass
class ComponentPair:
    a: np.ndarray  # length d
    b: np.ndarray  # length m

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)

    def weight(self) -> np.ndarray:
        return np.outer(self.b, self.a)

    def product(self, X) -> np.ndarray:
        return np.outer(self.b, self.a @ X)

    def copy(self) -> "ComponentPair":
        return ComponentPair(self.a.copy(), self.b.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b)))


@dataclass(frozen=True)
class Rank1Config:
    method: str = "als"
    inner_iters: int = 10
    eta_a: float | None = None
    eta_b: float | None = None

    def __post_init__(self):
        method = self.method.lower()
        if method in ("gd", "factored-gd", "factoredgd"):
            method = "gd"
        if method not in ("als", "gd"):
            raise ParameterError(f"unknown rank-1 method {self.method!r}")
        object.__setattr__(self, "method", method)
        if self.inner_iters < 1:
            raise ParameterError("inner_iters must be at least 1")
        for eta in (self.eta_a, self.eta_b):
            if eta is not None and not eta > 0:
                raise ParameterError("step sizes must be positive")


class Gram:
    """Cached ``M = X X^T`` with its Cholesky factor and top eigenvalue."""

    def __init__(self, X):
        self.X = np.asarray(X, dtype=float)
        self.M = self.X @ self.X.T
        try:
            self._cho = sla.cho_factor(self.M, lower=True, check_finite=True)
        except np.linalg.LinAlgError as exc:
            raise DegenerateInputError("X X^T is singular") from exc
        diag = np.diag(self._cho[0])
        if diag.min() ** 2 < 1e-20 * diag.max() ** 2:
            raise DegenerateInputError("X X^T is numerically singular")
        self.lambda_max = float(np.linalg.eigvalsh(self.M)[-1])

    def solve(self, rhs):
        return sla.cho_solve(self._cho, rhs, check_finite=False)

    def quad(self, a) -> float:
        return float(a @ self.M @ a)


def _gram(X, gram):
    if gram is not None:
        return gram
    return Gram(X)


def objective(Y_k, X, pair: ComponentPair) -> float:
    """``1/2 ||Y_k - b a^T X||_F^2``."""
    return 0.5 * float(np.linalg.norm(Y_k - pair.product(X)) ** 2)


def _moment_objective(yy, N, gram, a, b):
    # 1/2 (||Y||^2 - 2 b^T N a + ||b||^2 a^T M a); avoids forming the m x n residual
    return 0.5 * (yy - 2.0 * float(b @ N @ a) + float(b @ b) * gram.quad(a))


def als_sweeps(N, gram: Gram, T: int, warm: ComponentPair) -> ComponentPair:
    """Run ``T`` ALS sweeps given the moment ``N = Y_k X^T``."""
    a = warm.a.copy()
    b = warm.b.copy()
    for _ in range(T):
        q = gram.quad(a)
        if not q >= WARM_START_TOL:
            raise WarmStartError(f"a^T M a = {q:.3e} below {WARM_START_TOL}")
        b = N @ a / q
        bb = float(b @ b)
        if bb == 0.0:
            # zero target: the product b a^T vanishes and stays a fixed point
            break
        a = gram.solve(N.T @ b) / bb
    return ComponentPair(a, b)


def rank1_als(Y_k, X, T: int, warm: ComponentPair, gram: Gram | None = None) -> ComponentPair:
    """Alternating least squares, ``T`` sweeps of (b-step, a-step)."""
    if T < 1:
        raise ParameterError("T must be at least 1")
    gram = _gram(X, gram)
    return als_sweeps(np.asarray(Y_k) @ gram.X.T, gram, T, warm)


def default_steps(gram: Gram, warm: ComponentPair) -> tuple[float, float]:
    """Conservative steps: 0.5 over the curvature of each block at the warm start."""
    eta_a = 0.5 / (gram.lambda_max * max(float(warm.b @ warm.b), 1.0))
    eta_b = 0.5 / max(gram.quad(warm.a), 1.0)
    return eta_a, eta_b


def gd_steps(N, gram: Gram, T: int, warm: ComponentPair, eta_a, eta_b, yy: float) -> ComponentPair:
    a = warm.a.copy()
    b = warm.b.copy()
    start = _moment_objective(yy, N, gram, a, b)
    ceiling = 10.0 * max(start, 1e-300)
    for _ in range(T):
        Ma = gram.M @ a
        grad_a = Ma * float(b @ b) - N.T @ b
        grad_b = b * float(a @ Ma) - N @ a
        a = a - eta_a * grad_a
        b = b - eta_b * grad_b
        obj = _moment_objective(yy, N, gram, a, b)
        if not math.isfinite(obj) or obj > ceiling:
            raise DivergenceError(
                f"objective grew from {start:.3e} to {obj:.3e}",
                pair=ComponentPair(a, b), objective=obj,
            )
    return ComponentPair(a, b)


def rank1_gd(Y_k, X, T: int, warm: ComponentPair, eta_a=None, eta_b=None,
             gram: Gram | None = None) -> ComponentPair:
    """Factored gradient descent with simultaneous updates of ``a`` and ``b``.

    Missing step sizes fall back to :func:`default_steps`.  Raises
    :class:`DivergenceError` once the objective exceeds ten times its warm-start
    value.
    """
    if T < 1:
        raise ParameterError("T must be at least 1")
    gram = _gram(X, gram)
    Y_k = np.asarray(Y_k, dtype=float)
    da, db = default_steps(gram, warm)
    eta_a = da if eta_a is None else eta_a
    eta_b = db if eta_b is None else eta_b
    yy = float(np.sum(Y_k * Y_k))
    return gd_steps(Y_k @ gram.X.T, gram, T, warm, eta_a, eta_b, yy)


def gradients(Y_k, X, pair: ComponentPair):
    """Analytic gradients of the rank-1 objective with respect to ``a`` and ``b``."""
    M = X @ X.T
    N = Y_k @ X.T
    grad_a = M @ pair.a * float(pair.b @ pair.b) - N.T @ pair.b
    grad_b = pair.b * float(pair.a @ M @ pair.a) - N @ pair.a
    return grad_a, grad_b


def run_rank1(Y_k, X, warm: ComponentPair, cfg: Rank1Config, T: int | None = None,
              gram: Gram | None = None) -> ComponentPair:
    """Dispatch on ``cfg.method``."""
    T = cfg.inner_iters if T is None else T
    if cfg.method == "als":
        return rank1_als(Y_k, X, T, warm, gram=gram)
    return rank1_gd(Y_k, X, T, warm, cfg.eta_a, cfg.eta_b, gram=gram)


@dataclass(frozen=True)
class ContractionEstimate:
    value: float
    clipped: bool
    ratios: tuple[float, ...]
    excluded: int


def contraction_ratio(Y_k, X, fit_product, warm: ComponentPair, cfg: Rank1Config,
                      gram: Gram | None = None) -> float | None:
    """Error ratio of one subroutine call; ``None`` when the start is already exact."""
    before = float(np.linalg.norm(warm.product(X) - fit_product))
    if before <= 1e-300:
        return None
    out = run_rank1(Y_k, X, warm, cfg, gram=gram)
    return float(np.linalg.norm(out.product(X) - fit_product)) / before


def estimate_contraction(instance, k: int, cfg: Rank1Config, trials: int = 8,
                         radius: float = PROBE_RADIUS) -> ContractionEstimate:
    """Median one-call contraction of the subroutine near component ``k`` (1-indexed).

    Warm starts are random perturbations of the ideal pair, rescaled so the
    starting product error is ``radius * sigma_k`` in raw units.  The result
    is clipped into the open unit interval; ``clipped`` records whether the
    raw median was at or above 1.
    """
    from .deflation import exact_sequential_targets
    from .metrics import ideal_rank1_fit

    if instance.profile.kind == "uniform" or has_degenerate_gap(instance.gaps):
        raise DegenerateGapError("contraction probe needs a gapped spectrum")
    if not 1 <= k <= instance.r_star:
        raise ParameterError(f"k={k} outside [1, {instance.r_star}]")
    clean = exact_sequential_targets(instance.Y_clean, k)
    target = clean.targets[k - 1]
    gram = Gram(instance.X)
    fit, pair = ideal_rank1_fit(target, instance.X, gram=gram)
    sigma_k = float(np.linalg.norm(fit))
    rng = rng_for(instance.seed, STREAM_PROBE, k)

    ratios = []
    excluded = 0
    for _ in range(trials):
        da = rng.standard_normal(pair.a.size)
        db = rng.standard_normal(pair.b.size)
        da *= np.linalg.norm(pair.a) / np.linalg.norm(da)
        db *= np.linalg.norm(pair.b) / np.linalg.norm(db)
        t = radius
        warm = ComponentPair(pair.a + t * da, pair.b + t * db)
        err = float(np.linalg.norm(warm.product(instance.X) - fit))
        if err > 0:
            t *= radius * sigma_k / err
            warm = ComponentPair(pair.a + t * da, pair.b + t * db)
        ratio = contraction_ratio(target, instance.X, fit, warm, cfg, gram=gram)
        if ratio is None:
            excluded += 1
            continue
        ratios.append(ratio)
    if not ratios:
        raise DegenerateGapError("every probe started at the fixed point")
    raw = float(np.median(ratios))
    clipped = raw >= 1.0
    value = min(max(raw, 1e-16), 1.0 - 1e-9)
    return ContractionEstimate(value, clipped, tuple(ratios), excluded)
