"""Exact sequential, inexact sequential and parallel deflation.

Runs store the broadcast history as two arrays, ``A_hist[l, k]`` and
``B_hist[l, k]``, where row 0 is the random initialization and row ``l`` is
what component ``k`` broadcast at the end of round ``l``.  Deflation targets
are never stored; :meth:`DeflationRun.target` rebuilds them on demand.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import STREAM_INIT, full_svd, rng_for
from .errors import (
    DegenerateGapError,
    DivergenceError,
    NumericError,
    ParameterError,
    ScheduleError,
    SubroutineError,
)
from .rank1 import ComponentPair, Gram, Rank1Config, als_sweeps, default_steps, gd_steps

GAP_RTOL = 1e-8


@dataclass(frozen=True)
class ParallelConfig:
    """Settings for the parallel engine.

    ``Q`` is the Frobenius radius in the raw units of ``Y``; ``math.inf``
    disables projection.  ``activation`` holds ``s_k`` (1-indexed rounds) and
    defaults to ``s_k = k``.
    """

    r: int
    rounds: int
    rank1: Rank1Config = field(default_factory=Rank1Config)
    Q: float = math.inf
    advance_learning: bool = False
    activation: tuple[int, ...] | None = None
    init_scale: float = 0.02
    materialize: bool = False

    def __post_init__(self):
        if self.r < 0:
            raise ParameterError("r must be nonnegative")
        if self.rounds < 0:
            raise ParameterError("rounds must be nonnegative")
        if not self.Q > 0:
            raise ParameterError("Q must be positive or inf")
        if not self.init_scale > 0:
            raise ParameterError("init_scale must be positive")
        if self.activation is not None:
            act = tuple(int(s) for s in self.activation)
            if len(act) != self.r:
                raise ScheduleError(f"activation has {len(act)} entries for r={self.r}")
            if any(s < 1 for s in act):
                raise ScheduleError("activation rounds start at 1")
            object.__setattr__(self, "activation", act)

    def schedule(self) -> tuple[int, ...]:
        if self.activation is None:
            return tuple(range(1, self.r + 1))
        return self.activation


@dataclass
class DeflationRun:
    method: str
    A_hist: np.ndarray  # (L+1, r, d)
    B_hist: np.ndarray  # (L+1, r, m)
    activation: tuple[int, ...]
    Y: np.ndarray = field(repr=False)
    X: np.ndarray = field(repr=False)
    config: dict = field(default_factory=dict)
    gathers: int = 0
    round_seconds: list = field(default_factory=list)
    work: float = 0.0
    targets: dict | None = field(default=None, repr=False)

    @property
    def r(self) -> int:
        return self.A_hist.shape[1]

    @property
    def rounds(self) -> int:
        return self.A_hist.shape[0] - 1

    def pair(self, k: int, round_: int) -> ComponentPair:
        """Broadcast pair of component ``k`` (0-indexed) after ``round_``."""
        return ComponentPair(self.A_hist[round_, k].copy(), self.B_hist[round_, k].copy())

    def product(self, k: int, round_: int) -> np.ndarray:
        return np.outer(self.B_hist[round_, k], self.A_hist[round_, k] @ self.X)

    def weight(self, round_: int | None = None, upto: int | None = None) -> np.ndarray:
        round_ = self.rounds if round_ is None else round_
        upto = self.r if upto is None else upto
        return self.B_hist[round_, :upto].T @ self.A_hist[round_, :upto]

    def target(self, k: int, round_: int) -> np.ndarray:
        """``Y_{k,round}``: ``Y`` minus predecessors broadcast at ``round - 1``."""
        if self.targets is not None and (k, round_) in self.targets:
            return self.targets[(k, round_)]
        src = max(round_ - 1, 0)
        if k == 0:
            return self.Y.copy()
        return self.Y - self.weight(src, upto=k) @ self.X


@dataclass(frozen=True)
class CleanTargets:
    """``targets[k]`` is ``Y*_{k+1}``; ``components[k]`` is ``sigma*_k u v^T``."""

    targets: list
    components: list
    sigma: np.ndarray
    U: np.ndarray
    Vt: np.ndarray


def exact_sequential_targets(Y, r: int) -> CleanTargets:
    """Oracle deflation that removes the exact top singular components of ``Y``.

    ``targets`` has ``r + 1`` entries so that ``targets[r]`` is the residual
    after all ``r`` removals.
    """
    Y = np.asarray(Y, dtype=float)
    if not 0 <= r <= min(Y.shape):
        raise ParameterError(f"r={r} outside [0, {min(Y.shape)}]")
    U, s, Vt = full_svd(Y)
    scale = s[0] if s.size and s[0] > 0 else 1.0
    for k in range(r):
        nxt = s[k + 1] if k + 1 < s.size else 0.0
        prev = s[k - 1] if k > 0 else math.inf
        if s[k] > GAP_RTOL * scale and min(s[k] - nxt, prev - s[k]) < GAP_RTOL * scale:
            raise DegenerateGapError(f"singular value {k + 1} is not separated from its neighbours")
    targets = [Y.copy()]
    components = []
    for k in range(r):
        comp = s[k] * np.outer(U[:, k], Vt[k])
        components.append(comp)
        targets.append(targets[-1] - comp)
    return CleanTargets(targets, components, s[:r].copy(), U[:, :r].copy(), Vt[:r].copy())


def project_frobenius(pair: ComponentPair, X, Q: float) -> ComponentPair:
    """Rescale ``b`` so that ``||b a^T X||_F <= Q``."""
    if math.isinf(Q):
        return pair
    if not Q > 0:
        raise ParameterError("Q must be positive")
    norm = float(np.linalg.norm(pair.b) * np.linalg.norm(pair.a @ X))
    if norm <= Q or norm == 0.0:
        return pair
    return ComponentPair(pair.a, pair.b * (Q / norm))


def reconstruct_weight(run: DeflationRun, round_: int | None = None) -> np.ndarray:
    """``W_hat = sum_k b_k a_k^T`` at the given round (last round by default)."""
    round_ = run.rounds if round_ is None else round_
    if not 0 <= round_ <= run.rounds:
        raise ParameterError(f"round {round_} outside [0, {run.rounds}]")
    return run.weight(round_)


def initial_pairs(seed: int, r: int, d: int, m: int, scale: float = 0.02):
    """Random N(0, scale^2) starts shared by every engine for a given seed."""
    rng = rng_for(seed, STREAM_INIT)
    A = scale * rng.standard_normal((r, d))
    B = scale * rng.standard_normal((r, m))
    return A, B


class _Moments:
    """Round-invariant data shared by all workers: ``M``, ``Y X^T`` and ``||Y||^2``."""

    def __init__(self, Y, X):
        self.gram = Gram(X)
        self.N0 = Y @ X.T
        self.yy = float(np.sum(Y * Y))

    def target_moments(self, A_prev, B_prev, k: int, need_yy: bool):
        """``N_k = Y_k X^T`` and optionally ``||Y_k||_F^2`` for predecessors ``< k``."""
        if k == 0:
            return self.N0, self.yy
        P = B_prev[:k].T @ A_prev[:k]  # m x d
        PM = P @ self.gram.M
        N = self.N0 - PM
        yy = None
        if need_yy:
            yy = self.yy - 2.0 * float(np.sum(P * self.N0)) + float(np.sum(PM * P))
            yy = max(yy, 0.0)
        return N, yy


def _call_rank1(mom: _Moments, N, yy, warm: ComponentPair, cfg: Rank1Config, T: int):
    if cfg.method == "als":
        return als_sweeps(N, mom.gram, T, warm)
    da, db = default_steps(mom.gram, warm)
    eta_a = da if cfg.eta_a is None else cfg.eta_a
    eta_b = db if cfg.eta_b is None else cfg.eta_b
    return gd_steps(N, mom.gram, T, warm, eta_a, eta_b, yy)


def _validate_Q(Q, instance):
    if math.isinf(Q):
        return
    sigma1 = instance.y_scale
    if Q < sigma1 * (1 - 1e-12):
        raise ParameterError(f"Q={Q:.4g} is below sigma*_1={sigma1:.4g}")
    if Q < 2 * sigma1:
        warnings.warn(f"Q={Q:.4g} below 2 sigma*_1; bound constants assume Q >= 2 sigma*_1",
                      stacklevel=3)


def sequential_deflate(instance, r: int, budgets=None, rank1: Rank1Config | None = None,
                       rounds: int | None = None, init_scale: float = 0.02) -> DeflationRun:
    """Inexact sequential deflation with frozen components.

    Component ``k`` is fitted once, at round ``k``, with ``budgets[k]``
    subroutine iterations against ``Y`` minus the already frozen products;
    it is then held for every later round.  ``rounds`` (default ``r``) pads
    the history so traces align with a parallel run of the same length.
    """
    rank1 = rank1 or Rank1Config()
    if budgets is None:
        budgets = [rank1.inner_iters] * r
    budgets = [int(t) for t in budgets]
    if len(budgets) != r:
        raise ParameterError(f"budgets has {len(budgets)} entries for r={r}")
    if any(t < 1 for t in budgets):
        raise ParameterError("budgets must be at least 1")
    L = r if rounds is None else int(rounds)
    if L < r:
        raise ScheduleError(f"sequential run needs at least r={r} rounds, got {L}")

    Y, X = instance.Y, instance.X
    A0, B0 = initial_pairs(instance.seed, r, instance.d, instance.m, init_scale)
    A_hist = np.empty((L + 1, r, instance.d))
    B_hist = np.empty((L + 1, r, instance.m))
    A_hist[0], B_hist[0] = A0, B0
    run = DeflationRun(
        "sequential", A_hist, B_hist, tuple(range(1, r + 1)), Y, X,
        config={"r": r, "rounds": L, "budgets": budgets, "method": rank1.method,
                "init_scale": init_scale},
    )
    if r == 0:
        return run
    mom = _Moments(Y, X)
    for ell in range(1, L + 1):
        A_hist[ell] = A_hist[ell - 1]
        B_hist[ell] = B_hist[ell - 1]
        if ell > r:
            continue
        k = ell - 1
        t0 = time.perf_counter()
        N, yy = mom.target_moments(A_hist[ell - 1], B_hist[ell - 1], k, rank1.method == "gd")
        warm = ComponentPair(A_hist[ell - 1, k], B_hist[ell - 1, k])
        try:
            out = _call_rank1(mom, N, yy, warm, rank1, budgets[k])
        except (NumericError, DivergenceError) as exc:
            raise SubroutineError(k + 1, ell, exc) from exc
        A_hist[ell, k], B_hist[ell, k] = out.a, out.b
        run.round_seconds.append(time.perf_counter() - t0)
    run.work = float(sum(budgets))
    return run


def _worker_step(mom, A_prev, B_prev, local, k, ell, s_k, cfg: ParallelConfig, X):
    """One round of worker ``k``; returns (broadcast pair, new local state)."""
    active = ell >= s_k
    if not active and not cfg.advance_learning:
        return None, local
    N, yy = mom.target_moments(A_prev, B_prev, k, cfg.rank1.method == "gd")
    try:
        out = _call_rank1(mom, N, yy, local, cfg.rank1, cfg.rank1.inner_iters)
    except (NumericError, DivergenceError) as exc:
        raise SubroutineError(k + 1, ell, exc) from exc
    out = project_frobenius(out, X, cfg.Q)
    return (out if active else None), out


def parallel_deflate(instance, cfg: ParallelConfig, workers: int = 1) -> DeflationRun:
    """Component-parallel deflation with staggered activation.

    In round ``l`` every active worker ``k`` fits ``Y - sum_{k'<k} b a^T X``
    built from the round ``l - 1`` broadcasts, warm-started from its own
    latest state, then projects onto the Frobenius ball of radius ``Q``.
    Inactive workers hold their broadcast value; with ``advance_learning``
    they also train privately and start from that private state once active.
    ``workers`` only changes how components are spread across threads.
    """
    from .runtime import RoundPool, shard_components

    sched = cfg.schedule()
    L, r = cfg.rounds, cfg.r
    if r and L < max(sched):
        raise ScheduleError(f"rounds={L} is below the last activation round {max(sched)}")
    if r > min(instance.m, instance.d):
        raise ParameterError(f"r={r} exceeds min(m, d)")
    _validate_Q(cfg.Q, instance)

    Y, X = instance.Y, instance.X
    A0, B0 = initial_pairs(instance.seed, r, instance.d, instance.m, cfg.init_scale)
    for k in range(r):
        p = project_frobenius(ComponentPair(A0[k], B0[k]), X, cfg.Q)
        A0[k], B0[k] = p.a, p.b
    A_hist = np.empty((L + 1, r, instance.d))
    B_hist = np.empty((L + 1, r, instance.m))
    A_hist[0], B_hist[0] = A0, B0
    run = DeflationRun(
        "parallel", A_hist, B_hist, sched, Y, X,
        config={"r": r, "rounds": L, "Q": cfg.Q, "method": cfg.rank1.method,
                "inner_iters": cfg.rank1.inner_iters, "advance_learning": cfg.advance_learning,
                "activation": list(sched), "init_scale": cfg.init_scale, "workers": workers},
        targets={} if cfg.materialize else None,
    )
    if r == 0:
        return run

    mom = _Moments(Y, X)
    local = [ComponentPair(A0[k].copy(), B0[k].copy()) for k in range(r)]
    plan = shard_components(r, workers)
    with RoundPool(plan) as pool:
        for ell in range(1, L + 1):
            A_prev, B_prev = A_hist[ell - 1], B_hist[ell - 1]
            if cfg.materialize:
                for k in range(r):
                    run.targets[(k, ell)] = run.target(k, ell)

            def step(k, ell=ell, A_prev=A_prev, B_prev=B_prev):
                return _worker_step(mom, A_prev, B_prev, local[k], k, ell, sched[k], cfg, X)

            t0 = time.perf_counter()
            results = pool.run_round(step)
            A_hist[ell] = A_prev
            B_hist[ell] = B_prev
            for k, (broadcast, state) in enumerate(results):
                local[k] = state
                if broadcast is not None:
                    A_hist[ell, k], B_hist[ell, k] = broadcast.a, broadcast.b
            run.round_seconds.append(time.perf_counter() - t0)
        run.gathers = pool.gathers
    run.work = float(L * cfg.rank1.inner_iters)
    return run
