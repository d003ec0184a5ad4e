import math

import numpy as np
import pytest

from deflate_lab import (
    ComponentPair, ParallelConfig, exact_sequential_targets, generate_instance, parallel_deflate,
    project_frobenius, reconstruct_weight, sequential_deflate,
)
from deflate_lab.errors import DegenerateGapError, ParameterError, ScheduleError
from deflate_lab.theory import noiseless_bound


@pytest.fixture(scope="module")
def inst():
    return generate_instance(30, 40, 100, 4, "exp", seed=3)


def test_exact_targets_first_is_y_and_diag_example():
    Y = np.random.default_rng(0).standard_normal((5, 7))
    assert np.array_equal(exact_sequential_targets(Y, 1).targets[0], Y)
    ct = exact_sequential_targets(np.diag([3.0, 1.0, 0.0]), 2)
    np.testing.assert_allclose(ct.targets[1], np.diag([0.0, 1.0, 0.0]), atol=1e-12)


def test_exact_targets_telescope():
    Y = np.random.default_rng(1).standard_normal((6, 9))
    ct = exact_sequential_targets(Y, 4)
    np.testing.assert_allclose(sum(ct.components) + ct.targets[4], Y, atol=1e-9)


def test_exact_targets_refuse_ties():
    with pytest.raises(DegenerateGapError):
        exact_sequential_targets(np.diag([2.0, 2.0, 1.0]), 2)


def test_projection_examples():
    X = np.eye(3)
    p = ComponentPair(np.array([3.0, 0, 0]), np.array([1.0, 0]))
    out = project_frobenius(p, X, 2.0)
    assert np.linalg.norm(out.product(X)) == pytest.approx(2.0)
    assert project_frobenius(p, X, 5.0) is p
    assert project_frobenius(p, X, math.inf) is p


def test_zero_components_give_zero_weight(inst):
    run = sequential_deflate(inst, 0)
    assert np.all(reconstruct_weight(run) == 0)
    assert reconstruct_weight(run).shape == (30, 40)


def test_rank1_truth_recovered_in_one_sweep():
    inst = generate_instance(10, 12, 40, 1, "exp", seed=4)
    from deflate_lab.rank1 import Rank1Config
    run = sequential_deflate(inst, 1, rank1=Rank1Config(inner_iters=1))
    assert np.linalg.norm(run.product(0, 1) - inst.Y) < 1e-8 * np.linalg.norm(inst.Y)


def test_sequential_mismatch_frozen(inst):
    run = sequential_deflate(inst, 4, rounds=8)
    for k in range(1, 4):
        ref = run.target(k, k + 1)
        for ell in range(k + 2, 9):
            np.testing.assert_array_equal(run.target(k, ell), ref)


def test_first_target_is_y(inst):
    run = parallel_deflate(inst, ParallelConfig(r=4, rounds=6))
    for ell in range(7):
        assert np.array_equal(run.target(0, ell), inst.Y)


def test_single_component_contracts(inst):
    from deflate_lab import decompose_errors, estimate_contraction
    from deflate_lab.rank1 import Rank1Config
    cfg = Rank1Config(inner_iters=2)
    run = parallel_deflate(inst, ParallelConfig(r=1, rounds=6, rank1=cfg))
    G = decompose_errors(run, inst).G[0]
    F = estimate_contraction(inst, 1, cfg).value
    for ell in range(2, 7):
        if G[ell - 1] > 1e-10 * inst.y_scale:
            assert G[ell] <= 5 * F * G[ell - 1] + 1e-12 * inst.y_scale


def test_converged_run_is_accurate(inst):
    run = parallel_deflate(inst, ParallelConfig(r=4, rounds=20))
    W = reconstruct_weight(run)
    assert np.linalg.norm(W - inst.W_star) / np.linalg.norm(inst.W_star) < 1e-2


def test_exact_components_meet_noiseless_bound(inst):
    ct = exact_sequential_targets(inst.Y, 2)
    W_hat = sum(ct.components) @ np.linalg.pinv(inst.X)
    err = np.linalg.norm(inst.W_star - W_hat)
    assert err <= noiseless_bound(inst, np.zeros(2)) + 1e-9


def test_schedule_errors(inst):
    with pytest.raises(ScheduleError):
        parallel_deflate(inst, ParallelConfig(r=4, rounds=3))
    with pytest.raises(ScheduleError):
        ParallelConfig(r=2, rounds=5, activation=(1,))
    with pytest.raises(ParameterError):
        parallel_deflate(inst, ParallelConfig(r=2, rounds=4, Q=0.5 * inst.y_scale))


def test_default_activation_is_staggered():
    assert ParallelConfig(r=3, rounds=5).schedule() == (1, 2, 3)


def test_advance_learning_changes_only_dormant_path(inst):
    base = parallel_deflate(inst, ParallelConfig(r=3, rounds=8))
    adv = parallel_deflate(inst, ParallelConfig(r=3, rounds=8, advance_learning=True))
    # broadcasts of dormant workers are unchanged; component 1 is identical
    np.testing.assert_array_equal(base.A_hist[:, 0], adv.A_hist[:, 0])
    np.testing.assert_array_equal(base.A_hist[:2, 2], adv.A_hist[:2, 2])
    np.testing.assert_allclose(adv.weight(), base.weight(), atol=1e-8 * np.linalg.norm(inst.W_star))


def test_materialized_targets_match_moments(inst):
    a = parallel_deflate(inst, ParallelConfig(r=3, rounds=5))
    b = parallel_deflate(inst, ParallelConfig(r=3, rounds=5, materialize=True))
    np.testing.assert_allclose(a.A_hist, b.A_hist, rtol=1e-9, atol=1e-12)


def test_one_gather_per_round(inst):
    run = parallel_deflate(inst, ParallelConfig(r=4, rounds=7), workers=2)
    assert run.gathers == 7


def test_projection_active_keeps_products_in_ball(inst):
    Q = 2.0 * inst.y_scale
    run = parallel_deflate(inst, ParallelConfig(r=3, rounds=6, Q=Q))
    for ell in range(7):
        for k in range(3):
            assert np.linalg.norm(run.product(k, ell)) <= Q * (1 + 1e-12)
