import math

import numpy as np
import pytest
from scipy.special import lambertw

from deflate_lab import generate_instance
from deflate_lab.errors import DegenerateGapError, DomainError, NoFitError, ParameterError
from deflate_lab.theory import (
    convergence_envelope, detect_start, effective_rates, envelope, fit_decay, lambert_w_neg1,
    noise_floor, noiseless_bound, rate_plan, self_correction_envelope, surrogate_sequences, w_hat,
    w_hat_bound, warmup_schedule,
)

SIGMA = [1.0, 0.5, 0.25]


@pytest.mark.parametrize("x", [-0.3678, -0.3466, -0.2, -0.01, -1e-6, -1e-40])
def test_lambert_matches_scipy(x):
    ref = float(lambertw(x, -1).real)
    assert lambert_w_neg1(x) == pytest.approx(ref, rel=1e-12, abs=1e-9)


def test_lambert_examples():
    assert lambert_w_neg1(-1 / math.e) == -1.0
    assert lambert_w_neg1(-0.01) == pytest.approx(-6.4728, abs=1e-4)
    # y e^y = -0.3466 at y = -1.386021 (scipy and mpmath agree)
    assert lambert_w_neg1(-0.3466) == pytest.approx(-1.386021, abs=1e-6)
    with pytest.raises(DomainError):
        lambert_w_neg1(0.1)


def test_w_hat_examples():
    assert w_hat(1 / math.e) == 1.0
    assert w_hat(0.5, with_flag=True) == (1.0, True)
    assert w_hat(0.01) == pytest.approx(6.4728, abs=1e-4)
    v = w_hat(0.3466)
    assert v == pytest.approx(1.386021, abs=1e-6) and v <= w_hat_bound(0.3466)
    with pytest.raises(DomainError):
        w_hat(0.0)


def test_effective_rates_examples():
    assert effective_rates([0.3]) == pytest.approx([0.3])
    np.testing.assert_allclose(effective_rates([0.5, 0.5, 0.5]), [0.5, 0.75, 5 / 6])
    np.testing.assert_allclose(effective_rates([0.9, 0.1]), [0.9, 0.95])
    with pytest.raises(ParameterError):
        effective_rates([0.5, 1.0])


def test_rate_plan_scales_and_constants():
    plan = rate_plan(SIGMA, [0.5, 0.5, 0.5], Q=2.0)
    np.testing.assert_allclose(plan.R, [3, 2.5, 2.25])
    assert plan.C[1] == pytest.approx(7.0)


def test_rate_plan_refuses_uniform():
    inst = generate_instance(10, 12, 40, 3, "uniform", seed=0)
    with pytest.raises(DegenerateGapError):
        rate_plan(inst, [0.5, 0.5, 0.5])


def _oracle_s2(m1=0.5, R1=3.0, C2=7.0, T2=0.25, s1=1):
    # independent evaluation through scipy's Lambert W
    W = lambda a: max(1.0, -float(lambertw(-a, -1).real)) if a < 1 / math.e else 1.0  # noqa: E731
    lm = m1 * math.log(1 / m1)
    base = s1 + W(lm) / math.log(1 / m1) + W(T2 * lm / (6 * R1 * C2)) / math.log(1 / m1)
    return base + 2 * m1 / (1 - m1) + 2 + W(lm) / math.log(1 / m1)


def test_exact_schedule_s2():
    plan = rate_plan(SIGMA, [0.5, 0.5, 0.5], Q=2.0)
    assert abs(plan.s_exact[1] - 23) <= 1
    assert plan.s_exact[1] == math.ceil(_oracle_s2() - 1e-9)
    assert plan.s_exact[0] == 1


def test_schedule_single_component():
    assert list(rate_plan([1.0], [0.3]).s_exact) == [1]


def test_schedules_strictly_increase():
    rng = np.random.default_rng(0)
    for _ in range(30):
        sig = np.sort(rng.uniform(0.05, 1, size=5))[::-1]
        sig /= sig[0]
        plan = rate_plan(sig, rng.uniform(0.01, 0.99, size=5), Q=rng.uniform(1, 4))
        for s in (plan.s_exact, plan.s_simplified, warmup_schedule(plan, per_predecessor=False)):
            assert np.all(np.diff(s) >= 1)
        assert np.all(plan.s_hat <= plan.s_exact)


def test_envelope_examples():
    assert envelope(2.0, 0.5, 1, 1) == pytest.approx(6.0)
    plan = rate_plan(SIGMA, [0.5, 0.5, 0.5], Q=2.0)
    assert convergence_envelope(plan, 2, 5, 4) == pytest.approx(3 * plan.R[1])
    assert convergence_envelope(plan, 1, 1, 201) < 1e-6 * plan.R[0]
    with pytest.raises(ParameterError):
        convergence_envelope(plan, 2, 5, 2)


def test_self_correction_envelope():
    plan = rate_plan(SIGMA, [0.5, 0.5, 0.5], Q=2.0)
    s = plan.s_exact
    assert self_correction_envelope(plan, s, 1, 10) == 0.0
    assert self_correction_envelope(plan, s, 2, s[0]) == pytest.approx(3 * plan.R[0])
    assert self_correction_envelope(plan, s, 2, 300) < 1e-6


def test_surrogates_structure():
    plan = rate_plan(SIGMA, [0.5, 0.5, 0.5], Q=2.0)
    L = int(plan.s_exact[-1]) + 20
    sur = surrogate_sequences(plan, plan.s_exact, plan.s_hat, [0.1, 0.1, 0.1], L)
    assert np.all(sur.B_hat[0] == plan.R[0])
    s1 = plan.s_exact[0]
    ell = np.arange(s1, L + 1)
    np.testing.assert_allclose(sur.G_hat[0, s1:],
                               plan.m[0] ** (ell - s1 + 1) * (ell - s1 + 2) * sur.G_boundary[0])
    assert np.all(sur.B_hat <= plan.R[:, None] + 1e-12)


def test_fit_decay_exact_geometric():
    G = 2 * 0.6 ** np.arange(31)
    fit = fit_decay(G, 1)
    assert fit.m_hat == pytest.approx(0.6, abs=1e-9)
    assert fit.C_hat == pytest.approx(2.0, abs=1e-9)
    assert fit.s_hat == detect_start(G, 1)


def test_fit_decay_linear_prefactor():
    ell = np.arange(31)
    G = 3 * 2.5 * (ell + 1) * 0.7 ** ell
    assert abs(fit_decay(G, 1).m_hat - 0.7) < 0.05


def test_fit_decay_refuses_flat_trace():
    with pytest.raises(NoFitError):
        fit_decay(np.ones(30), 1)


def test_detect_start_treats_floor_as_converged():
    G = np.r_[1.0, 1.0, 1e-3, 1e-8, 1e-15, 2e-15, 1e-15, 1.5e-15, 1e-15]
    assert detect_start(G, 1) is None
    assert detect_start(G, 1, floor=1e-12) == 1


def test_noise_floor_examples():
    assert noise_floor(0.1, 10, 200, 500) == pytest.approx(0.2)
    assert noise_floor(0.0, 10, 200, 500) == 0.0
    assert noise_floor(0.2, 10, 200, 500) == pytest.approx(2 * noise_floor(0.1, 10, 200, 500))


def test_noiseless_bound_examples():
    inst = generate_instance(20, 30, 80, 4, "exp", seed=2)
    assert noiseless_bound(inst, np.zeros(4)) == pytest.approx(0.0, abs=1e-12)
    expected = inst.sigma_raw[2:].sum() / inst.sigma_min_x
    assert noiseless_bound(inst, np.zeros(2)) == pytest.approx(expected)
    noisy = generate_instance(20, 30, 80, 4, "exp", noise=0.1, seed=2)
    with pytest.raises(ParameterError):
        noiseless_bound(noisy, np.zeros(4))
