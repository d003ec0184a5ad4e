import numpy as np
import pytest

from deflate_lab.core import (
    SpectralProfile, full_svd, generate_instance, has_degenerate_gap, make_spectral_profile,
    spectral_gaps, tail_sum, top_svd,
)
from deflate_lab.errors import DegenerateInputError, DimensionError, NumericError, ParameterError


@pytest.mark.parametrize("kind,r,expected", [
    ("exp", 3, [1, 0.5, 0.25]),
    ("uniform", 4, [1, 1, 1, 1]),
    ("power", 3, [1, 0.35355339, 0.19245009]),
])
def test_profiles(kind, r, expected):
    np.testing.assert_allclose(make_spectral_profile(kind, r), expected, atol=1e-8)


def test_linear_gap_clamps_at_floor():
    vals = make_spectral_profile(SpectralProfile.linear_gap(0.5), 4)
    np.testing.assert_allclose(vals, [1, 0.5, 0.01, 0.01])


@pytest.mark.parametrize("bad", [dict(kind="power", exponent=0), dict(kind="lingap", step=1.0),
                                 dict(kind="nope")])
def test_profile_rejects_bad_parameters(bad):
    with pytest.raises(ParameterError):
        SpectralProfile(**bad)


def test_spectral_gaps_examples():
    np.testing.assert_allclose(spectral_gaps([1, 0.5, 0.25]), [0.5, 0.25, 0.25])
    tied = spectral_gaps([1, 1])
    np.testing.assert_array_equal(tied, [0, 0])
    assert has_degenerate_gap(tied)
    np.testing.assert_allclose(spectral_gaps([1]), [1])
    with pytest.raises(ParameterError):
        spectral_gaps([1, 0])


def test_tail_sum():
    s = [1, 0.5, 0.25]
    assert tail_sum(s, 2) == 0.25
    assert tail_sum(s, 3) == 0
    assert tail_sum(s, 1) == 0.75


def test_top_svd_diagonal_and_zero():
    t = top_svd(np.diag([3.0, 1.0]), 1)[0]
    assert t.sigma == pytest.approx(3)
    assert abs(t.u[0]) == pytest.approx(1) and abs(t.v[0]) == pytest.approx(1)
    z = top_svd(np.zeros((3, 2)), 2)
    assert all(tr.sigma == 0 for tr in z)


def test_top_svd_matches_eigen_oracle():
    M = np.random.default_rng(0).standard_normal((10, 8))
    evals, evecs = np.linalg.eigh(M.T @ M)
    order = np.argsort(evals)[::-1][:3]
    for t, i in zip(top_svd(M, 3), order):
        assert t.sigma == pytest.approx(np.sqrt(evals[i]), abs=1e-8)
        v = evecs[:, i]
        assert abs(abs(t.v @ v) - 1) < 1e-8


def test_full_svd_rejects_nan():
    with pytest.raises(NumericError):
        full_svd(np.array([[np.nan]]))


def test_instance_noiseless_identity_and_rank():
    inst = generate_instance(50, 80, 200, 5, "exp", seed=43)
    assert np.linalg.norm(inst.Y - inst.W_star @ inst.X) == 0
    s = np.linalg.svd(inst.W_star, compute_uv=False)
    assert int(np.sum(s > 1e-8)) == 5
    assert inst.sigma_Y[0] == 1


def test_instance_determinism():
    a = generate_instance(50, 80, 200, 5, "exp", noise=0.1, seed=43)
    b = generate_instance(50, 80, 200, 5, "exp", noise=0.1, seed=43)
    assert a.Y.tobytes() == b.Y.tobytes()
    c = generate_instance(50, 80, 200, 5, "exp", noise=0.1, seed=44)
    assert not np.array_equal(a.Y, c.Y)


def test_whitened_inputs_keep_profile():
    inst = generate_instance(20, 15, 60, 4, SpectralProfile.linear_gap(0.2), seed=1, whiten_x=True)
    np.testing.assert_allclose(inst.sigma_Y, [1, 0.8, 0.6, 0.4], atol=1e-10)


def test_instance_errors():
    with pytest.raises(DimensionError):
        generate_instance(5, 4, 20, 6)
    with pytest.raises(DegenerateInputError):
        generate_instance(5, 30, 20, 2)
