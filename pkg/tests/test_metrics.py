import numpy as np
import pytest

from deflate_lab import (
    ParallelConfig, decompose_errors, exact_sequential_targets, generate_instance, ideal_rank1_fit,
    nash_residual, parallel_deflate, sequential_deflate,
)
from deflate_lab.deflation import DeflationRun
from deflate_lab.errors import NonuniqueFitError


@pytest.fixture(scope="module")
def inst():
    return generate_instance(30, 40, 100, 4, "exp", seed=5)


def test_fit_of_rank1_has_zero_residual():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((6, 20))
    Y = np.outer(rng.standard_normal(4), rng.standard_normal(6) @ X)
    fit, pair = ideal_rank1_fit(Y, X)
    np.testing.assert_allclose(fit, Y, atol=1e-10)
    np.testing.assert_allclose(pair.product(X), Y, atol=1e-9)


def test_fit_residual_matches_eckart_young():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((8, 30))
    Y = rng.standard_normal((5, 30))
    fit, _ = ideal_rank1_fit(Y, X)
    s = np.linalg.svd(Y, compute_uv=False)
    assert np.linalg.norm(Y - fit) == pytest.approx(np.sqrt(np.sum(s[1:] ** 2)), abs=1e-8)


def test_fit_of_clean_target_is_ideal_component(inst):
    ct = exact_sequential_targets(inst.Y_clean, 3)
    fit, _ = ideal_rank1_fit(ct.targets[2], inst.X)
    np.testing.assert_allclose(fit, ct.components[2], atol=1e-9 * inst.y_scale)


def test_tied_fit_refused():
    with pytest.raises(NonuniqueFitError):
        ideal_rank1_fit(np.eye(3), np.eye(3))


def _exact_run(inst, r, L=3):
    ct = exact_sequential_targets(inst.Y_clean, r)
    A = np.empty((L + 1, r, inst.d))
    B = np.empty((L + 1, r, inst.m))
    Xp = np.linalg.pinv(inst.X)
    for k in range(r):
        a = (ct.Vt[k] * ct.sigma[k]) @ Xp
        A[:, k], B[:, k] = a, ct.U[:, k]
    return DeflationRun("exact", A, B, tuple(range(1, r + 1)), inst.Y, inst.X)


def test_exact_components_have_zero_errors(inst):
    tr = decompose_errors(_exact_run(inst, 3), inst).scaled()
    assert np.nanmax(tr.D[:, 1:]) < 1e-9
    assert np.nanmax(tr.B[:, 1:]) < 1e-9
    assert np.nanmax(tr.G[:, 1:]) < 1e-9


def test_nash_residual_zero_at_equilibrium(inst):
    assert np.max(nash_residual(_exact_run(inst, 3), inst)) < 1e-8 * inst.y_scale


def test_first_component_has_no_mismatch(inst):
    tr = decompose_errors(parallel_deflate(inst, ParallelConfig(r=3, rounds=6)), inst)
    assert np.all(tr.B[0] == 0)
    assert np.all(tr.mismatch[0] == 0)


def test_triangle_inequality_on_traces(inst):
    for run in (parallel_deflate(inst, ParallelConfig(r=4, rounds=8)),
                sequential_deflate(inst, 4, rounds=8)):
        tr = decompose_errors(run, inst)
        ok = np.isfinite(tr.G)
        assert np.all(tr.G[ok] <= tr.D[ok] + tr.B[ok] + 1e-9 * inst.y_scale)


def test_r1_nash_residual_is_D(inst):
    run = parallel_deflate(inst, ParallelConfig(r=1, rounds=3))
    tr = decompose_errors(run, inst)
    assert nash_residual(run, inst)[0] == pytest.approx(tr.D[0, -1], abs=1e-12 * inst.y_scale)


def test_worker3_D_and_B_decay_to_common_floor():
    inst = generate_instance(50, 80, 200, 5, "exp", seed=1)
    tr = decompose_errors(parallel_deflate(inst, ParallelConfig(r=5, rounds=30)), inst).scaled()
    assert tr.D[2, -1] < 1e-10 and tr.B[2, -1] < 1e-10
    assert tr.D[2, -1] < tr.D[2, 3] / 5 and tr.B[2, -1] < tr.B[2, 3] / 5


def test_degenerate_instance_flags_trace():
    inst = generate_instance(8, 6, 30, 3, "uniform", seed=0, whiten_x=True)
    tr = decompose_errors(parallel_deflate(inst, ParallelConfig(r=3, rounds=4)), inst)
    assert tr.degenerate
    assert np.all(np.isnan(tr.B)) and np.all(np.isnan(tr.G))
