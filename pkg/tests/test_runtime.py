import numpy as np
import pytest

from deflate_lab import ParallelConfig, generate_instance, parallel_deflate
from deflate_lab.errors import ParameterError
from deflate_lab.runtime import run_sharded, shard_components, thread_cap


def test_round_robin_examples():
    plan = shard_components(5, 2)
    assert [[k + 1 for k in plan.components_of(w)] for w in range(2)] == [[1, 3, 5], [2, 4]]
    assert shard_components(4, 1).components_of(0) == [0, 1, 2, 3]
    wide = shard_components(3, 5)
    assert wide.loads() == [1, 1, 1, 0, 0]
    with pytest.raises(ParameterError):
        shard_components(3, 0)


@pytest.mark.parametrize("r,P", [(1, 1), (7, 3), (16, 4), (5, 8)])
def test_loads_balanced(r, P):
    loads = shard_components(r, P).loads()
    assert sum(loads) == r and max(loads) - min(loads) <= 1


def test_sharded_runs_are_bit_identical():
    inst = generate_instance(40, 60, 150, 8, "exp", seed=2)
    cfg = ParallelConfig(r=8, rounds=9)
    ref = parallel_deflate(inst, cfg)
    for P in (2, 3, 4):
        res = run_sharded(inst, cfg, P)
        assert np.array_equal(res.run.A_hist, ref.A_hist)
        assert np.array_equal(res.run.B_hist, ref.B_hist)
        assert res.run.gathers == cfg.rounds
        assert len(res.seconds) == cfg.rounds and res.mean_seconds > 0


def test_thread_cap_env(monkeypatch):
    monkeypatch.delenv("DEFLATE_LAB_THREADS", raising=False)
    assert thread_cap() is None
    monkeypatch.setenv("DEFLATE_LAB_THREADS", "3")
    assert thread_cap() == 3
    monkeypatch.setenv("DEFLATE_LAB_THREADS", "zero")
    with pytest.raises(ParameterError):
        thread_cap()


def test_thread_cap_limits_pool(monkeypatch):
    from deflate_lab.runtime import RoundPool
    monkeypatch.setenv("DEFLATE_LAB_THREADS", "1")
    with RoundPool(shard_components(6, 4)) as pool:
        assert pool.threads == 1
