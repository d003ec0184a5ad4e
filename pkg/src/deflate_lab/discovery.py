"""Budgeted rank discovery over a stack of independent bilinear modules.

Each module owns a synthetic instance and a growing list of committed
rank-1 components plus one reserve that trains privately on the residual
left by the committed set.  After every round the modules with the highest
``S_bar * U`` score promote their reserve, until the global budget is spent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import STREAM_DISCOVERY, ProblemInstance, generate_instance, rng_for
from .deflation import DeflationRun
from .errors import ConfigError, ParameterError, WarmStartError
from .metrics import DeflationTrace, decompose_errors
from .rank1 import ComponentPair, Gram, Rank1Config, als_sweeps

EMA_MODES = ("updated", "stale")


def raw_importance(theta, grads, with_flag: bool = False):
    """``S = sum |p| |grad_p| / sqrt(||theta||_2)``; zero parameters give 0."""
    theta = np.ravel(np.asarray(theta, dtype=float))
    grads = np.ravel(np.asarray(grads, dtype=float))
    if theta.shape != grads.shape:
        raise ParameterError("theta and grads must have the same size")
    norm = float(np.linalg.norm(theta))
    if norm < 1e-12:
        return (0.0, True) if with_flag else 0.0
    s = float(np.sum(np.abs(theta) * np.abs(grads)) / math.sqrt(norm))
    return (s, False) if with_flag else s


def update_ema(S_bar: float, U: float, S: float, beta1: float = 0.85, beta2: float = 0.85,
               mode: str = "updated") -> tuple[float, float]:
    """Signal and volatility EMAs.

    ``mode="updated"`` measures volatility against the freshly updated mean;
    ``"stale"`` uses the previous mean instead.
    """
    if not (0 < beta1 < 1 and 0 < beta2 < 1):
        raise ParameterError("betas must lie in (0, 1)")
    if mode not in EMA_MODES:
        raise ParameterError(f"unknown EMA mode {mode!r}")
    new_bar = beta1 * S_bar + (1.0 - beta1) * S
    ref = new_bar if mode == "updated" else S_bar
    return new_bar, beta2 * U + (1.0 - beta2) * abs(S - ref)


def orth_penalty(A, B, lam: float, n_layers: int = 1) -> float:
    """``lam (||A^T A - I||_F + ||B B^T - I||_F) / (2 n_layers)``.

    ``A`` stacks the committed ``a`` vectors as columns (d x r) and ``B`` the
    ``b`` vectors as rows (r x m), so both Gram matrices are r x r.
    """
    if lam == 0:
        return 0.0
    if n_layers < 1:
        raise ParameterError("n_layers must be positive")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    ga = A.T @ A
    gb = B @ B.T
    val = np.linalg.norm(ga - np.eye(ga.shape[0])) + np.linalg.norm(gb - np.eye(gb.shape[0]))
    return float(lam * val / (2.0 * n_layers))


@dataclass
class ModuleState:
    id: int
    instance: ProblemInstance
    committed: list
    reserve: ComponentPair
    r_max: int
    S_bar: float = 0.0
    U: float = 0.0
    snapshot: list = field(default_factory=list)
    committed_at: list = field(default_factory=list)

    @property
    def r(self) -> int:
        return len(self.committed)

    @property
    def score(self) -> float:
        return self.S_bar * self.U

    @property
    def eligible(self) -> bool:
        return self.r < self.r_max

    def take_snapshot(self):
        self.snapshot = [p.copy() for p in self.committed]

    def weight(self) -> np.ndarray:
        W = np.zeros((self.instance.m, self.instance.d))
        for p in self.committed:
            W += np.outer(p.b, p.a)
        return W


@dataclass(frozen=True)
class DiscoveryConfig:
    M: int
    r_max: int
    budget: int
    batches: int = 4  # growth interval: cached batches per round
    batch_size: int | None = None
    top_h: int = 2
    beta1: float = 0.85
    beta2: float = 0.85
    lambda_orth: float = 0.0
    rank1: Rank1Config = field(default_factory=lambda: Rank1Config(inner_iters=2))
    rounds: int = 20
    scoring: str = "importance"  # or "uniform"
    ema_mode: str = "updated"
    init_scale: float = 0.02

    def __post_init__(self):
        if self.M < 1 or self.r_max < 1:
            raise ConfigError("M and r_max must be positive")
        if not self.M <= self.budget <= self.M * self.r_max:
            raise ConfigError(f"budget must lie in [M, M*r_max] = [{self.M}, {self.M * self.r_max}]")
        if not 1 <= self.top_h <= self.M:
            raise ConfigError("top_h must lie in [1, M]")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError("betas must lie in (0, 1)")
        if self.lambda_orth < 0:
            raise ConfigError("lambda_orth must be nonnegative")
        if self.batches < 1 or self.rounds < 1:
            raise ConfigError("batches and rounds must be positive")
        if self.scoring not in ("importance", "uniform"):
            raise ConfigError(f"unknown scoring {self.scoring!r}")
        if self.ema_mode not in EMA_MODES:
            raise ConfigError(f"unknown EMA mode {self.ema_mode!r}")
        if self.rank1.method != "als":
            raise ConfigError("rank discovery uses the ALS subroutine")


def grow_step(states: list[ModuleState], cfg: DiscoveryConfig, rng=None) -> list[int]:
    """Promote reserves of the best eligible modules; returns promoted ids.

    Importance scoring ranks by ``S_bar * U`` (ties to the lower id); uniform
    scoring grows the lowest-rank modules first.
    """
    total = sum(s.r for s in states)
    room = cfg.budget - total
    if room <= 0:
        return []
    eligible = [s for s in states if s.eligible]
    if cfg.scoring == "importance":
        eligible.sort(key=lambda s: (-s.score, s.id))
    else:
        eligible.sort(key=lambda s: (s.r, s.id))
    chosen = eligible[: min(cfg.top_h, room)]
    rng = rng if rng is not None else rng_for(0, STREAM_DISCOVERY)
    for s in chosen:
        s.committed.append(s.reserve)
        s.reserve = _fresh_pair(rng, s.instance, cfg.init_scale)
    return [s.id for s in sorted(chosen, key=lambda s: s.id)]


def _fresh_pair(rng, inst, scale) -> ComponentPair:
    return ComponentPair(scale * rng.standard_normal(inst.d), scale * rng.standard_normal(inst.m))


def heterogeneous_stack(ranks=(1, 1, 2, 2, 4, 4), m: int = 20, d: int = 30, n: int = 240,
                        profile: str = "exp", noise: float = 0.01, seed: int = 0) -> list:
    """One instance per module with its own true rank; seeds are derived per module."""
    return [
        generate_instance(m, d, n, int(r), profile=profile, noise=noise,
                          seed=int(seed) * 1000 + i)
        for i, r in enumerate(ranks)
    ]


def balanced_stacks(pairs):
    """Stacks of ``a`` and ``b`` rescaled so each pair has ``||a|| = ||b||``.

    The product is unchanged; this only removes the arbitrary scale split
    that would otherwise leak into the ``1/sqrt(||theta||)`` normalization.
    """
    A = np.stack([p.a for p in pairs])
    B = np.stack([p.b for p in pairs])
    na = np.linalg.norm(A, axis=1)
    nb = np.linalg.norm(B, axis=1)
    c = np.sqrt(np.divide(nb, na, out=np.ones_like(na), where=(na > 0) & (nb > 0)))
    return A * c[:, None], B / c[:, None]


def _batch_gradients(state: ModuleState, cols) -> tuple[np.ndarray, np.ndarray]:
    """Flattened committed parameters and the gradient of the module's batch loss."""
    X = state.instance.X[:, cols]
    Y = state.instance.Y[:, cols]
    if not state.committed:
        return np.zeros(0), np.zeros(0)
    A, B = balanced_stacks(state.committed)
    R = Y - B.T @ (A @ X)
    scale = 1.0 / len(cols)
    grad_a = -(B @ R @ X.T) * scale  # r x d
    grad_b = -(A @ X @ R.T) * scale  # r x m
    theta = np.concatenate([A.ravel(), B.ravel()])
    grads = np.concatenate([grad_a.ravel(), grad_b.ravel()])
    return theta, grads


def _update_module(state: ModuleState, batch_list, cfg: DiscoveryConfig, grams) -> float:
    """Run the cached batches for one module; returns the mean raw importance."""
    inst = state.instance
    T = cfg.rank1.inner_iters
    snap = state.snapshot
    scores = []
    for bi, cols in enumerate(batch_list):
        theta, grads = _batch_gradients(state, cols)
        scores.append(raw_importance(theta, grads) if theta.size else 0.0)
        X = inst.X[:, cols]
        Y = inst.Y[:, cols]
        gram = grams[bi]
        N0 = Y @ X.T
        prefix = np.zeros((inst.m, inst.d))
        new = []
        for k in range(len(state.committed)):
            N = N0 - prefix @ gram.M
            new.append(_safe_als(N, gram, T, state.committed[k]))
            if k < len(snap):
                prefix = prefix + np.outer(snap[k].b, snap[k].a)
        # reserve learns privately on what the whole snapshot leaves
        N = N0 - prefix @ gram.M
        state.reserve = _safe_als(N, gram, T, state.reserve)
        state.committed = new
    return float(np.mean(scores))


def _safe_als(N, gram, T, warm):
    try:
        return als_sweeps(N, gram, T, warm)
    except WarmStartError:
        # collapsed start: nudge along the top right direction of N
        a = gram.solve(N.T @ np.linalg.svd(N)[0][:, 0])
        b = warm.b if np.any(warm.b) else np.ones_like(warm.b)
        return als_sweeps(N, gram, T, ComponentPair(a, b))


@dataclass
class DiscoveryResult:
    ranks: list
    rank_history: np.ndarray  # (rounds + 1, M)
    promotions: list  # per round
    scores: np.ndarray  # (rounds + 1, M) of S_bar * U
    errors: np.ndarray  # final ||W*_i - W_hat_i||_F per module
    penalty: np.ndarray  # per round orth penalty summed over modules
    states: list = field(repr=False)
    traces: list = field(default_factory=list, repr=False)

    @property
    def total_error(self) -> float:
        return float(np.sum(self.errors))


def adapad_train(instances, cfg: DiscoveryConfig, seed: int = 0, traces: bool = False,
                 order=None) -> DiscoveryResult:
    """Budgeted rank growth with importance scoring and reserve advance learning.

    Every module starts with one committed component.  A round snapshots all
    committed sets, runs ``cfg.batches`` column batches through every module,
    updates the EMAs once from the mean batch importance, then (from round 2
    on) calls :func:`grow_step`.  ``order`` permutes the module update order,
    which must not change the result.
    """
    instances = list(instances)
    if len(instances) != cfg.M:
        raise ConfigError(f"config has M={cfg.M} but {len(instances)} instances were given")
    n = instances[0].n
    if any(inst.n != n for inst in instances):
        raise ConfigError("all modules must share the number of samples")
    d_max = max(inst.d for inst in instances)
    bsize = cfg.batch_size or max(2 * d_max, n // cfg.batches)
    if bsize < d_max or bsize > n:
        raise ConfigError(f"batch size {bsize} must lie in [{d_max}, {n}]")

    rng = rng_for(seed, STREAM_DISCOVERY)
    states = []
    for i, inst in enumerate(instances):
        first = _fresh_pair(rng, inst, cfg.init_scale)
        states.append(ModuleState(i, inst, [first], _fresh_pair(rng, inst, cfg.init_scale),
                                  cfg.r_max, committed_at=[1]))
    hist_a = [[[s.committed[0].a.copy()]] for s in states]
    hist_b = [[[s.committed[0].b.copy()]] for s in states]

    L = cfg.rounds
    rank_history = np.zeros((L + 1, cfg.M), dtype=int)
    rank_history[0] = [s.r for s in states]
    scores = np.zeros((L + 1, cfg.M))
    penalty = np.zeros(L + 1)
    promotions = []
    order = list(range(cfg.M)) if order is None else list(order)

    for ell in range(1, L + 1):
        batch_rng = rng_for(seed, STREAM_DISCOVERY, ell)
        perm = batch_rng.permutation(n)
        batch_list = [np.sort(np.take(perm, np.arange(j * bsize, (j + 1) * bsize), mode="wrap"))
                      for j in range(cfg.batches)]
        for s in states:
            s.take_snapshot()
        for i in order:
            s = states[i]
            grams = [Gram(s.instance.X[:, cols]) for cols in batch_list]
            S = _update_module(s, batch_list, cfg, grams)
            s.S_bar, s.U = update_ema(s.S_bar, s.U, S, cfg.beta1, cfg.beta2, cfg.ema_mode)
        for s in states:
            hist_a[s.id].append([p.a.copy() for p in s.committed])
            hist_b[s.id].append([p.b.copy() for p in s.committed])
        scores[ell] = [s.score for s in states]
        penalty[ell] = sum(
            orth_penalty(np.stack([p.a for p in s.committed], axis=1),
                         np.stack([p.b for p in s.committed]), cfg.lambda_orth)
            for s in states
        )
        grown = []
        if ell >= 2:
            grown = grow_step(states, cfg, rng)
            for i in grown:
                states[i].committed_at.append(ell + 1)
        promotions.append(grown)
        rank_history[ell] = [s.r for s in states]
        assert rank_history[ell].sum() <= cfg.budget

    errors = np.array([np.linalg.norm(s.instance.W_star - s.weight()) for s in states])
    result = DiscoveryResult([s.r for s in states], rank_history, promotions, scores, errors,
                             penalty, states)
    if traces:
        result.traces = [_module_trace(s, hist_a[s.id], hist_b[s.id], L) for s in states]
    return result


def _module_trace(state: ModuleState, hist_a, hist_b, L) -> DeflationTrace:
    """Trace of the components a module ended with; pre-commit rounds hold zeros."""
    inst = state.instance
    r = min(state.r, inst.r_star)
    A = np.zeros((L + 1, r, inst.d))
    B = np.zeros((L + 1, r, inst.m))
    for ell in range(L + 1):
        for k, (a, b) in enumerate(zip(hist_a[ell], hist_b[ell])):
            if k < r:
                A[ell, k], B[ell, k] = a, b
    run = DeflationRun("discovery", A, B, tuple(state.committed_at[:r]), inst.Y, inst.X)
    return decompose_errors(run, inst)
