import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from deflate_lab import ParallelConfig, decompose_errors, generate_instance, parallel_deflate
from deflate_lab.core import SpectralProfile, make_spectral_profile
from deflate_lab.deflation import project_frobenius
from deflate_lab.discovery import raw_importance, update_ema
from deflate_lab.rank1 import ComponentPair, objective, rank1_als
from deflate_lab.runtime import shard_components
from deflate_lab.theory import effective_rates, lambert_w_neg1, w_hat, w_hat_bound

unit_open = st.floats(min_value=1e-6, max_value=1 - 1e-6)


@given(st.sampled_from(["exp", "power", "uniform"]), st.integers(1, 30))
def test_profiles_normalized_nonincreasing(kind, r):
    v = make_spectral_profile(kind, r)
    assert v[0] == 1 and np.all(np.diff(v) <= 0) and np.all(v > 0)


@given(st.floats(0.01, 0.99), st.integers(1, 40))
def test_linear_gap_floor(step, r):
    v = make_spectral_profile(SpectralProfile.linear_gap(step), r)
    assert np.all(v >= 0.01 - 1e-15)


@given(st.lists(unit_open, min_size=1, max_size=20))
def test_rates_in_unit_interval_and_nondecreasing(F):
    m = effective_rates(F)
    assert np.all((m > 0) & (m < 1))
    assert np.all(np.diff(m) >= -1e-15)
    assert np.all(m >= np.asarray(F) - 1e-15)


@given(st.floats(-1 / math.e, -1e-200, exclude_min=True))
def test_lambert_solves_equation(x):
    y = lambert_w_neg1(x)
    assert y <= -1
    assert math.isclose(y * math.exp(y), x, rel_tol=1e-9, abs_tol=1e-300)


@given(st.floats(1e-100, 1 / math.e, exclude_max=True))
def test_w_hat_below_explicit_bound(a):
    assert 1.0 <= w_hat(a) <= w_hat_bound(a) + 1e-9


@given(st.integers(0, 60), st.integers(1, 9))
def test_shards_cover_each_component_once(r, P):
    plan = shard_components(r, P)
    assert sorted(k for w in range(P) for k in plan.components_of(w)) == list(range(r))
    loads = plan.loads()
    assert max(loads) - min(loads) <= 1


@given(arrays(float, 6, elements=st.floats(-10, 10)), arrays(float, 6, elements=st.floats(-10, 10)),
       st.floats(0.01, 100))
def test_importance_scales_linearly_in_gradient(theta, grads, c):
    s = raw_importance(theta, grads)
    assert s >= 0
    assert math.isclose(raw_importance(theta, c * grads), c * s, rel_tol=1e-9, abs_tol=1e-12)


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10), st.floats(0.01, 0.99),
       st.sampled_from(["updated", "stale"]))
def test_ema_stays_between_inputs(S_bar, U, S, beta, mode):
    nb, nu = update_ema(S_bar, U, S, beta, beta, mode)
    assert min(S_bar, S) - 1e-12 <= nb <= max(S_bar, S) + 1e-12
    assert nu >= 0


@settings(max_examples=40)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 10))
def test_projection_bounds_norm(seed, Q):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((4, 9))
    p = ComponentPair(rng.standard_normal(4), 3 * rng.standard_normal(5))
    out = project_frobenius(p, X, Q)
    assert np.linalg.norm(out.product(X)) <= Q * (1 + 1e-12)
    np.testing.assert_array_equal(out.a, p.a)


@settings(max_examples=40)
@given(st.integers(0, 2**31 - 1))
def test_als_objective_never_increases(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((5, 20))
    Y = rng.standard_normal((6, 20))
    pair = ComponentPair(rng.standard_normal(5), rng.standard_normal(6))
    prev = objective(Y, X, pair)
    for _ in range(5):
        pair = rank1_als(Y, X, 1, pair)
        cur = objective(Y, X, pair)
        assert cur <= prev * (1 + 1e-10) + 1e-12
        prev = cur


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["exp", "power"]), st.floats(0, 0.2))
def test_total_error_below_sum_of_parts(seed, profile, noise):
    inst = generate_instance(10, 12, 40, 3, profile, noise=noise, seed=seed)
    tr = decompose_errors(parallel_deflate(inst, ParallelConfig(r=3, rounds=5)), inst)
    ok = np.isfinite(tr.G) & np.isfinite(tr.B) & np.isfinite(tr.D)
    assert np.all(tr.G[ok] <= tr.D[ok] + tr.B[ok] + 1e-9 * inst.y_scale)
