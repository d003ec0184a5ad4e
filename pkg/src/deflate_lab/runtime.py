"""Round-based thread pool for component-parallel deflation.

Each round, every worker thread processes its own components against a
read-only snapshot of the previous round; results are gathered once, in
component order, so the outcome never depends on the thread count.
"""
from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ParameterError

THREADS_ENV = "DEFLATE_LAB_THREADS"


@dataclass(frozen=True)
class ShardPlan:
    r: int
    P: int
    assignment: tuple[int, ...]  # component index (0-based) -> worker

    def components_of(self, worker: int) -> list[int]:
        return [k for k, w in enumerate(self.assignment) if w == worker]

    def loads(self) -> list[int]:
        return [len(self.components_of(w)) for w in range(self.P)]


def thread_cap() -> int | None:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        cap = int(raw)
    except ValueError as exc:
        raise ParameterError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if cap < 1:
        raise ParameterError(f"{THREADS_ENV} must be at least 1")
    return cap


def shard_components(r: int, P: int) -> ShardPlan:
    """Round-robin assignment: component ``k`` (1-indexed) goes to worker ``(k - 1) mod P``."""
    if P < 1:
        raise ParameterError("P must be at least 1")
    if r < 0:
        raise ParameterError("r must be nonnegative")
    return ShardPlan(r, P, tuple(k % P for k in range(r)))


@dataclass
class RoundPool:
    """Executes one round at a time and counts the gathers between rounds."""

    plan: ShardPlan
    gathers: int = 0
    seconds: list = field(default_factory=list)
    _executor: ThreadPoolExecutor | None = field(default=None, repr=False)

    @property
    def threads(self) -> int:
        n = min(self.plan.P, max(self.plan.r, 1))
        cap = thread_cap()
        return min(n, cap) if cap else n

    def __enter__(self):
        if self.threads > 1:
            self._executor = ThreadPoolExecutor(max_workers=self.threads)
        return self

    def __exit__(self, *exc):
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None
        return False

    def run_round(self, step) -> list:
        """Apply ``step(k)`` to every component and return results in index order."""
        t0 = time.perf_counter()
        results = [None] * self.plan.r

        def shard(worker):
            return [(k, step(k)) for k in self.plan.components_of(worker)]

        workers = range(self.plan.P)
        if self._executor is None:
            chunks = [shard(w) for w in workers]
        else:
            chunks = list(self._executor.map(shard, workers))
        # the single gather of the round
        for chunk in chunks:
            for k, value in chunk:
                results[k] = value
        self.gathers += 1
        self.seconds.append(time.perf_counter() - t0)
        return results


@dataclass(frozen=True)
class ShardedResult:
    run: object
    P: int
    seconds: tuple[float, ...]

    @property
    def mean_seconds(self) -> float:
        return float(np.mean(self.seconds)) if self.seconds else 0.0

    @property
    def std_seconds(self) -> float:
        return float(np.std(self.seconds)) if self.seconds else 0.0

    @property
    def total_seconds(self) -> float:
        return float(np.sum(self.seconds))


def run_sharded(instance, cfg, P: int) -> ShardedResult:
    """Parallel deflation on ``P`` worker threads with BLAS pinned to one thread."""
    from .deflation import parallel_deflate

    with threadpool_limits(limits=1):
        run = parallel_deflate(instance, cfg, workers=P)
    return ShardedResult(run, P, tuple(run.round_seconds))


def usable_cores() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover - non-Linux
        return os.cpu_count() or 1
