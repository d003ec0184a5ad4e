"""Closed-form rates, schedules and envelopes for parallel deflation.

All quantities live in normalized units where ``sigma*_1 = 1``.  Indices
``k`` are 1-based throughout this module, matching the round numbering.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import has_degenerate_gap, spectral_gaps, tail_sum
from .errors import (
    DegenerateGapError,
    DegenerateInputError,
    DomainError,
    NoFitError,
    ParameterError,
)

INV_E = math.exp(-1.0)
DETECTION_WINDOW = 5


def lambert_w_neg1(x: float) -> float:
    """Solve ``y e^y = x`` on the branch ``y <= -1`` by bisection."""
    x = float(x)
    if not -INV_E <= x < 0:
        raise DomainError(f"lambert_w_neg1 needs x in [-1/e, 0), got {x!r}")
    if x <= -INV_E + 1e-300 or math.isclose(x, -INV_E, rel_tol=1e-15):
        return -1.0
    lo, hi = -50.0, -1.0
    # y e^y rises from -1/e to 0 as y goes from -1 to -inf
    while lo * math.exp(lo) < x:
        lo *= 2.0
        if lo < -1e4:
            raise DomainError(f"argument {x!r} too close to zero")
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid * math.exp(mid) < x:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * abs(lo):
            break
    return 0.5 * (lo + hi)


def w_hat_bound(a: float) -> float:
    """Explicit upper bound ``log(1/a) + log log(1/a) + 1`` for ``a < 1/e``."""
    la = math.log(1.0 / a)
    return la + math.log(la) + 1.0


def w_hat(a: float, with_flag: bool = False):
    """``max{1, -W_{-1}(-a)}``, clamped to 1 for ``a >= 1/e``."""
    a = float(a)
    if not a > 0 or not math.isfinite(a):
        raise DomainError(f"w_hat needs a > 0, got {a!r}")
    if a >= INV_E:
        return (1.0, True) if with_flag else 1.0
    val = max(1.0, -lambert_w_neg1(-a))
    assert val <= w_hat_bound(a) + 1e-9, (a, val)
    return (val, False) if with_flag else val


def effective_rates(F) -> np.ndarray:
    """``m_1 = F_1``; ``m_k = max(F_k, 1/k + (k-1) m_{k-1} / k)``."""
    F = np.asarray(F, dtype=float)
    if F.ndim != 1:
        raise ParameterError("F must be a vector")
    if np.any(~(F > 0)) or np.any(~(F < 1)):
        raise ParameterError("every contraction factor must lie in (0, 1)")
    m = np.empty_like(F)
    for i, f in enumerate(F):
        k = i + 1
        m[i] = f if k == 1 else max(f, 1.0 / k + (k - 1) * m[i - 1] / k)
    return m


@dataclass(frozen=True)
class RatePlan:
    F: np.ndarray
    m: np.ndarray
    R: np.ndarray
    C: np.ndarray
    gamma: np.ndarray
    sigma: np.ndarray
    gaps: np.ndarray
    Q: float
    constants: tuple[float, float, float] = (1.0, 1.0, 1.0)
    s_exact: np.ndarray = field(default=None)
    s_hat: np.ndarray = field(default=None)
    s_simplified: np.ndarray = field(default=None)

    @property
    def r(self) -> int:
        return self.F.size


def rate_plan(source, F, Q: float = 2.0, C1: float = 1.0, C2: float = 1.0,
              C3: float = 1.0) -> RatePlan:
    """Rates, scales, constants and both warm-up schedules.

    ``source`` is a :class:`~deflate_lab.core.ProblemInstance` or a normalized
    nonincreasing singular value vector; ``F`` has one entry per component.
    """
    F = np.asarray(F, dtype=float)
    r = F.size
    if hasattr(source, "sigma_Y"):
        if not source.profile.gapped:
            raise DegenerateGapError("uniform profile has no spectral gap")
        sigma_all = np.asarray(source.sigma_Y, dtype=float)
    else:
        sigma_all = np.asarray(source, dtype=float)
        sigma_all = sigma_all / sigma_all[0]
    if r < 1 or r > sigma_all.size:
        raise ParameterError(f"F has {r} entries for {sigma_all.size} singular values")
    gaps_all = spectral_gaps(sigma_all)
    if has_degenerate_gap(gaps_all[:r]):
        raise DegenerateGapError("spectral gap vanishes for a requested component")
    if not math.isfinite(Q) or Q < 1.0:
        raise ParameterError("theory needs a finite Q >= sigma*_1 = 1")

    sigma, gaps = sigma_all[:r].copy(), gaps_all[:r].copy()
    m = effective_rates(F)
    k = np.arange(1, r + 1)
    gamma = 1.0 / (k + 1) + k * m / (k + 1)
    assert np.all(np.diff(m) >= -1e-15)
    assert np.all(gamma[:-1] <= m[1:] + 1e-12) and np.all(F[1:] <= m[1:])
    plan = RatePlan(F=F, m=m, R=Q + sigma, C=3.0 * sigma / gaps + 1.0, gamma=gamma,
                    sigma=sigma, gaps=gaps, Q=float(Q), constants=(C1, C2, C3))
    s, s_hat = warmup_schedule(plan, "exact", with_hat=True)
    object.__setattr__(plan, "s_exact", s)
    object.__setattr__(plan, "s_hat", s_hat)
    object.__setattr__(plan, "s_simplified", warmup_schedule(plan, "simplified"))
    return plan


def _wterm(arg: float, m: float) -> float:
    return w_hat(arg) / math.log(1.0 / m)


def warmup_schedule(plan: RatePlan, form: str = "exact", per_predecessor: bool = True,
                    with_hat: bool = False):
    """Warm-up rounds ``s_1 = 1 < s_2 < ...``.

    ``exact`` evaluates the Lambert-W form; with ``per_predecessor=False`` the
    maximum is taken term by term, which is looser.  ``simplified`` uses the
    logarithmic corollary with the plan's constants.  ``with_hat`` also
    returns the gap-activation rounds ``s_hat`` (exact form only).
    """
    form = form.lower()
    if form not in ("exact", "simplified"):
        raise ParameterError(f"unknown schedule form {form!r}")
    m, R, C, T = plan.m, plan.R, plan.C, plan.gaps
    C1, C2, C3 = plan.constants
    r = plan.r
    s = np.ones(r, dtype=np.int64)
    s_hat = np.ones(r, dtype=np.int64)
    for k in range(1, r):  # computing s_{k+1}; predecessors k' = 1..k
        mk = m[k - 1]
        offset = (k + 1) * mk / (1.0 - mk)
        if form == "exact":
            offset += 2.0 + _wterm(mk * abs(math.log(mk)), mk)
            parts = []
            for j in range(k):
                mj = m[j]
                lm = mj * abs(math.log(mj))
                t1 = _wterm(lm / k, mj)
                t2 = _wterm(T[k] * lm / (6.0 * k * R[j] * C[k]), mj)
                parts.append((s[j], t1, t2))
            if per_predecessor:
                base = max(a + b + c for a, b, c in parts)
            else:
                base = max(p[0] for p in parts) + max(p[1] for p in parts) + max(p[2] for p in parts)
        else:
            offset += C3 / (1.0 - mk)
            base = max(
                s[j] + (C1 * math.log(k * C[k] * R[j] / T[k]) + C2) / (1.0 - m[j])
                for j in range(k)
            )
        s_hat[k] = max(math.ceil(base - 1e-9), s_hat[k - 1] + 1)
        s[k] = max(math.ceil(base + offset - 1e-9), s[k - 1] + 1)
    if with_hat:
        return s, s_hat
    return s


def envelope(R: float, m: float, s: int, ell) -> np.ndarray | float:
    """``3 R (l - s + 2) m^(l - s + 1)``."""
    t = np.asarray(ell, dtype=float) - s
    out = 3.0 * R * (t + 2.0) * m ** (t + 1.0)
    return float(out) if np.ndim(out) == 0 else out


def convergence_envelope(plan: RatePlan, k: int, s_k: int, ell: int) -> float:
    if ell < s_k - 1:
        raise ParameterError(f"envelope defined for l >= s_k - 1 = {s_k - 1}")
    return envelope(plan.R[k - 1], plan.m[k - 1], s_k, ell)


def self_correction_envelope(plan: RatePlan, s, k: int, ell: int) -> float:
    """``3 sum_{k'<k} R_k' (l - s_k' + 1) m_k'^(l - s_k')``."""
    total = 0.0
    for j in range(k - 1):
        if ell < s[j]:
            raise ParameterError(f"l={ell} precedes s_{j + 1}={s[j]}")
        t = ell - s[j]
        total += plan.R[j] * (t + 1) * plan.m[j] ** t
    return 3.0 * total


@dataclass(frozen=True)
class SurrogatePlan:
    B_hat: np.ndarray  # [k, round]
    G_hat: np.ndarray  # [k, round]; NaN before s_k - 1
    s: tuple[int, ...]
    s_hat: tuple[int, ...]
    B_boundary: np.ndarray
    G_boundary: np.ndarray


def surrogate_sequences(plan: RatePlan, s, s_hat, D_boundary, rounds: int) -> SurrogatePlan:
    """Piecewise surrogates dominating ``B`` and ``G`` under the exact schedule.

    ``D_boundary[k-1]`` is the measured normalized ``D_{k, s_k - 1}``.
    """
    s = [int(v) for v in s]
    s_hat = [int(v) for v in s_hat]
    r = plan.r
    if len(s) != r or len(s_hat) != r or len(D_boundary) != r:
        raise ParameterError("schedule and boundary lengths must equal r")
    if any(h > v for h, v in zip(s_hat[1:], s[1:])):
        raise ParameterError("s_hat must not exceed s")
    L = int(rounds)
    ell = np.arange(L + 1)
    B_hat = np.empty((r, L + 1))
    G_hat = np.full((r, L + 1), np.nan)
    B_b = np.full(r, np.nan)
    G_b = np.empty(r)

    def G_at(j, t):
        # value of G_hat for component j (0-based) at round t >= s_j - 1
        if t < s[j]:
            return G_b[j]
        return plan.m[j] ** (t - s[j] + 1) * (t - s[j] + 2) * G_b[j]

    for i in range(r):
        R = plan.R[i]
        if i == 0:
            B_hat[i] = R
        else:
            sh = s_hat[i]
            if any(sh - 1 < s[j] - 1 for j in range(i)):
                raise ParameterError(f"s_hat_{i + 1} precedes a predecessor's warm-up")
            B_b[i] = plan.C[i] * sum(G_at(j, sh - 1) for j in range(i))
            t = ell - sh
            post = np.minimum(R, plan.m[i - 1] ** np.maximum(t, 0) * (t + 1) * B_b[i])
            B_hat[i] = np.where(ell < sh, R, post)

        def Bh(t, i=i):
            return plan.R[i] if t < 0 or t > L else B_hat[i, t]

        G_b[i] = D_boundary[i] + Bh(s[i] - 1) + Bh(s[i] - 2)
        for t in range(max(s[i] - 1, 0), L + 1):
            G_hat[i, t] = G_at(i, t)
    return SurrogatePlan(B_hat, G_hat, tuple(s), tuple(s_hat), B_b, G_b)


@dataclass(frozen=True)
class DecayFit:
    m_hat: float
    s_hat: int
    C_hat: float
    residual: float
    points: int


def detect_start(G, s_k: int, window: int = DETECTION_WINDOW, floor: float = 0.0) -> int | None:
    """First round ``l >= s_k`` after which ``G`` decreases for ``window`` rounds.

    Values at or below ``floor`` count as still decreasing, since rounding
    noise at the floor is not a failure to converge.
    """
    G = np.asarray(G, dtype=float)
    L = G.size - 1
    for start in range(max(s_k, 0), L - window + 1):
        seg = G[start:start + window + 1]
        ok = all(seg[i + 1] < seg[i] or seg[i + 1] <= floor for i in range(window))
        if ok:
            return start
    return None


def fit_decay(G, s_k: int, window: int = DETECTION_WINDOW, floor: float = 0.0,
              min_rounds: int = 8) -> DecayFit:
    """Least-squares fit ``log G = log C + l log m`` after activation.

    ``G`` is indexed by round (entry 0 is round 0).  Only rounds at or past
    the detected start where ``G`` is below half its value at ``s_k - 1`` and
    above ``floor`` enter the regression.
    """
    G = np.asarray(G, dtype=float)
    L = G.size - 1
    if L - s_k + 1 < min_rounds:
        raise NoFitError(f"need {min_rounds} rounds after activation, have {L - s_k + 1}")
    start = detect_start(G, s_k, window, floor)
    if start is None:
        raise NoFitError("G never decays monotonically over the detection window")
    ref = G[max(s_k - 1, 0)]
    ell = np.arange(L + 1)
    mask = (ell >= start) & (G <= 0.5 * ref) & (G > floor) & np.isfinite(G)
    if mask.sum() < 2:
        raise NoFitError("fewer than two rounds qualify for the regression")
    x, y = ell[mask].astype(float), np.log(G[mask])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    if not slope < 0:
        raise NoFitError(f"fitted slope {slope:.3g} is not decreasing")
    return DecayFit(float(np.exp(slope)), int(start), float(np.exp(intercept)), resid,
                    int(mask.sum()))


def noise_floor(eps: float, r_star: int, d: int, n: int) -> float:
    """Statistical floor ``eps sqrt(r* d / n)``."""
    if eps < 0 or min(r_star, d, n) <= 0:
        raise ParameterError("noise_floor needs eps >= 0 and positive dimensions")
    return float(eps * math.sqrt(r_star * d / n))


def noiseless_bound(instance, G_final, r: int | None = None) -> float:
    """``(tail + sum_k G_{k,L}) / sigma_min(X)`` in raw units.

    ``G_final`` holds the raw final-round total errors of the ``r`` fitted
    components.
    """
    if instance.noise > 0:
        raise ParameterError("the noiseless bound needs a noiseless instance")
    if instance.sigma_min_x < 1e-10:
        raise DegenerateInputError("sigma_min(X) below 1e-10")
    G_final = np.asarray(G_final, dtype=float)
    r = G_final.size if r is None else r
    tail = tail_sum(instance.sigma_raw, min(r, instance.sigma_raw.size))
    return float((tail + np.sum(G_final)) / instance.sigma_min_x)
