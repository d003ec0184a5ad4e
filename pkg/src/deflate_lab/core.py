"""Synthetic bilinear regression instances and spectral utilities.

Every random draw goes through :func:`rng_for`, which derives an independent
PCG64 stream from ``(seed, stream)``.  Streams are fixed integers so the
weights, inputs and noise of an instance do not depend on one another: two
instances that differ only in noise level share ``W_star`` and ``X``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, DimensionError, NumericError, ParameterError

# stream ids for rng_for; order of generation is W*, then X, then E
STREAM_WEIGHTS = 0
STREAM_INPUTS = 1
STREAM_NOISE = 2
STREAM_INIT = 3
STREAM_PROBE = 4
STREAM_DISCOVERY = 5

PROFILE_KINDS = ("exp", "power", "uniform", "lingap")
_ALIASES = {
    "exponential": "exp",
    "power-law": "power",
    "powerlaw": "power",
    "linear-gap": "lingap",
    "linear": "lingap",
}

SIGMA_MIN_X = 1e-10
GAP_RTOL = 1e-8


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Return a generator for the named sub-stream of ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class SpectralProfile:
    """Shape of the singular values of ``W_star``.

    ``kind`` is one of ``exp`` (2^{r-k}), ``power`` (k^-exponent),
    ``uniform`` (all ones) or ``lingap`` (1 - (k-1) step, clamped at floor).
    """

    kind: str = "exp"
    exponent: float = 1.5
    step: float = 0.1
    floor: float = 0.01

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in PROFILE_KINDS:
            raise ParameterError(f"unknown profile kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == "power" and not self.exponent > 0:
            raise ParameterError("power-law exponent must be positive")
        if kind == "lingap":
            if not 0 < self.step < 1:
                raise ParameterError("linear-gap step must lie in (0, 1)")
            if not 0 < self.floor <= 1:
                raise ParameterError("linear-gap floor must lie in (0, 1]")

    @classmethod
    def exponential(cls):
        return cls("exp")

    @classmethod
    def power_law(cls, exponent=1.5):
        return cls("power", exponent=exponent)

    @classmethod
    def uniform(cls):
        return cls("uniform")

    @classmethod
    def linear_gap(cls, step, floor=0.01):
        return cls("lingap", step=step, floor=floor)

    @property
    def gapped(self) -> bool:
        return self.kind != "uniform"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "exponent": self.exponent, "step": self.step, "floor": self.floor}


def make_spectral_profile(profile: SpectralProfile | str, r_star: int) -> np.ndarray:
    """Singular values of length ``r_star`` with the first entry equal to 1."""
    if isinstance(profile, str):
        profile = SpectralProfile(profile)
    if r_star < 1:
        raise ParameterError("r_star must be at least 1")
    k = np.arange(1, r_star + 1, dtype=float)
    if profile.kind == "exp":
        values = 2.0 ** (r_star - k)
    elif profile.kind == "power":
        values = k ** (-profile.exponent)
    elif profile.kind == "uniform":
        values = np.ones(r_star)
    else:
        values = np.maximum(1.0 - (k - 1.0) * profile.step, profile.floor)
    return values / values[0]


def spectral_gaps(sigma) -> np.ndarray:
    """Per-component gaps ``T_k = min(min_{j>k} |s_k - s_j|, s_k)``.

    A component whose value ties (relative 1e-8) with any other component
    gets gap 0, so ``[1, 1]`` maps to ``[0, 0]``.  Use :func:`has_degenerate_gap`
    to test the result.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 1 or sigma.size == 0:
        raise ParameterError("sigma must be a non-empty vector")
    if np.any(sigma <= 0) or not np.all(np.isfinite(sigma)):
        raise ParameterError("sigma entries must be positive and finite")
    if np.any(np.diff(sigma) > GAP_RTOL * sigma[0]):
        raise ParameterError("sigma must be nonincreasing")
    r = sigma.size
    gaps = sigma.copy()
    for k in range(r - 1):
        gaps[k] = min(np.min(np.abs(sigma[k] - sigma[k + 1:])), sigma[k])
    tol = GAP_RTOL * sigma[0]
    for k in range(r):
        others = np.delete(sigma, k)
        if others.size and np.min(np.abs(others - sigma[k])) <= tol:
            gaps[k] = 0.0
    return gaps


def has_degenerate_gap(gaps, scale: float = 1.0) -> bool:
    return bool(np.any(np.asarray(gaps) <= GAP_RTOL * scale))


def tail_sum(sigma, r: int) -> float:
    """Sum of the singular values after the first ``r``."""
    sigma = np.asarray(sigma, dtype=float)
    if not 0 <= r <= sigma.size:
        raise ParameterError(f"r={r} outside [0, {sigma.size}]")
    return float(np.sum(sigma[r:]))


@dataclass(frozen=True)
class SvdTriplet:
    sigma: float
    u: np.ndarray
    v: np.ndarray

    def outer(self) -> np.ndarray:
        return self.sigma * np.outer(self.u, self.v)


def _canonical_signs(U, Vt):
    # first nonzero entry of each left vector is made positive
    for i in range(U.shape[1]):
        col = U[:, i]
        nz = np.flatnonzero(np.abs(col) > 1e-14 * max(np.max(np.abs(col)), 1e-300))
        if nz.size and col[nz[0]] < 0:
            U[:, i] = -col
            Vt[i] = -Vt[i]
    return U, Vt


def full_svd(M: np.ndarray):
    """Thin SVD with the library's sign convention."""
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise NumericError("matrix has non-finite entries")
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    U, Vt = _canonical_signs(U, Vt)
    return U, s, Vt


def top_svd(M: np.ndarray, k: int) -> list[SvdTriplet]:
    """First ``k`` singular triplets in nonincreasing order."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DimensionError("top_svd expects a matrix")
    if not 0 <= k <= min(M.shape):
        raise DimensionError(f"k={k} exceeds min(dims)={min(M.shape)}")
    U, s, Vt = full_svd(M)
    return [SvdTriplet(float(s[i]), U[:, i].copy(), Vt[i].copy()) for i in range(k)]


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """A synthetic instance ``Y = W_star X + E``.

    ``sigma_Y`` holds the top ``r_star`` singular values of the clean product
    ``W_star X`` divided by the largest one, so ``sigma_Y[0] == 1``; the raw
    values are in ``sigma_raw`` and ``y_scale == sigma_raw[0]``.  Error
    quantities computed on raw matrices are divided by ``y_scale`` before they
    meet theory-side bounds.
    """

    m: int
    d: int
    n: int
    r_star: int
    W_star: np.ndarray = field(repr=False)
    X: np.ndarray = field(repr=False)
    noise: float
    Y: np.ndarray = field(repr=False)
    sigma_Y: np.ndarray
    sigma_raw: np.ndarray
    gaps: np.ndarray
    seed: int
    profile: SpectralProfile
    whiten_x: bool = False
    sigma_min_x: float = 0.0
    sigma_max_x: float = 0.0

    @property
    def y_scale(self) -> float:
        return float(self.sigma_raw[0])

    @property
    def Y_clean(self) -> np.ndarray:
        return self.W_star @ self.X

    @property
    def degenerate(self) -> bool:
        return has_degenerate_gap(self.gaps)

    @property
    def kappa_x(self) -> float:
        return self.sigma_max_x / self.sigma_min_x

    def describe(self) -> dict:
        return {
            "m": self.m, "d": self.d, "n": self.n, "r_star": self.r_star,
            "noise": self.noise, "seed": self.seed, "whiten_x": self.whiten_x,
            "profile": self.profile.to_dict(),
        }


def generate_instance(
    m: int,
    d: int,
    n: int,
    r_star: int,
    profile: SpectralProfile | str = "exp",
    noise: float = 0.0,
    seed: int = 0,
    whiten_x: bool = False,
) -> ProblemInstance:
    """Draw ``W_star = U diag(profile) V^T``, Gaussian ``X`` and noise ``E``."""
    if isinstance(profile, str):
        profile = SpectralProfile(profile)
    if min(m, d, n, r_star) < 1:
        raise DimensionError("dimensions must be positive")
    if r_star > min(m, d):
        raise DimensionError(f"r_star={r_star} exceeds min(m, d)={min(m, d)}")
    if noise < 0:
        raise ParameterError("noise level must be nonnegative")
    if d > n:
        raise DegenerateInputError(f"X is {d}x{n}; full row rank needs d <= n")

    values = make_spectral_profile(profile, r_star)
    g = rng_for(seed, STREAM_WEIGHTS)
    U, _ = np.linalg.qr(g.standard_normal((m, r_star)))
    V, _ = np.linalg.qr(g.standard_normal((d, r_star)))
    W_star = (U * values) @ V.T

    X = rng_for(seed, STREAM_INPUTS).standard_normal((d, n))
    if whiten_x:
        Qx, _ = np.linalg.qr(X.T)
        X = np.sqrt(n) * Qx.T
    sx = np.linalg.svd(X, compute_uv=False)
    if sx[-1] < SIGMA_MIN_X:
        raise DegenerateInputError(f"sigma_min(X)={sx[-1]:.3e} below {SIGMA_MIN_X}")

    clean = W_star @ X
    if noise > 0:
        Y = clean + noise * rng_for(seed, STREAM_NOISE).standard_normal((m, n))
    else:
        Y = clean.copy()

    sigma_raw = np.linalg.svd(clean, compute_uv=False)[:r_star]
    sigma_Y = sigma_raw / sigma_raw[0]
    return ProblemInstance(
        m=m, d=d, n=n, r_star=r_star, W_star=W_star, X=X, noise=float(noise), Y=Y,
        sigma_Y=sigma_Y, sigma_raw=sigma_raw, gaps=spectral_gaps(sigma_Y), seed=int(seed),
        profile=profile, whiten_x=whiten_x,
        sigma_min_x=float(sx[-1]), sigma_max_x=float(sx[0]),
    )
