"""Error decomposition of deflation runs.

For component ``k`` at round ``l`` with broadcast product ``P``, best rank-1
fit ``fit`` of its target and ideal component ``star``:

* ``D = ||P - fit||``     numerical error
* ``B = ||fit - star||``  deflation mismatch
* ``G = ||P - star||``    total error, so ``G <= D + B``

Ideal components always come from the noiseless product ``W_star X``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import full_svd
from .deflation import DeflationRun, exact_sequential_targets
from .errors import DegenerateGapError, NonuniqueFitError
from .rank1 import ComponentPair, Gram

FIT_RTOL = 1e-8


def ideal_rank1_fit(Y_k, X, gram: Gram | None = None):
    """Top singular triplet of ``Y_k`` as a product and as a factor pair.

    The pair is ``b = u`` and ``a = (X X^T)^{-1} X (sigma v)``.
    """
    Y_k = np.asarray(Y_k, dtype=float)
    U, s, Vt = full_svd(Y_k)
    if s.size > 1 and s[0] > 0 and s[0] - s[1] <= FIT_RTOL * s[0]:
        raise NonuniqueFitError(f"top singular value is tied ({s[0]:.6g}, {s[1]:.6g})")
    gram = gram if gram is not None else Gram(X)
    u, v, sigma = U[:, 0], Vt[0], float(s[0])
    product = sigma * np.outer(u, v)
    a = gram.solve(gram.X @ (sigma * v))
    return product, ComponentPair(a, u.copy())


def _fit_product(Y_k):
    """Top rank-1 term, or ``None`` when the top singular value is tied."""
    U, s, Vt = full_svd(Y_k)
    if s.size > 1 and s[0] > 0 and s[0] - s[1] <= FIT_RTOL * s[0]:
        return None, s
    return s[0] * np.outer(U[:, 0], Vt[0]), s


@dataclass
class DeflationTrace:
    """Column-wise arrays indexed ``[k, round]`` with ``k`` 0-based.

    ``mismatch`` is the Frobenius target mismatch ``||Y_{k,l} - Y*_k||_F`` and
    ``mismatch_spec`` its spectral norm.  Entries that are undefined are NaN.
    """

    D: np.ndarray
    B: np.ndarray
    G: np.ndarray
    mismatch: np.ndarray
    mismatch_spec: np.ndarray
    rel_weight_error: np.ndarray  # per round
    active: np.ndarray  # bool [k, round]
    activation: tuple[int, ...]
    sigma_star: np.ndarray  # raw
    scale: float = 1.0
    degenerate: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def r(self) -> int:
        return self.D.shape[0]

    @property
    def rounds(self) -> int:
        return self.D.shape[1] - 1

    def scaled(self) -> "DeflationTrace":
        """Copy with every distance divided by ``sigma*_1`` of the clean data."""
        c = self.scale
        return replace(
            self, D=self.D / c, B=self.B / c, G=self.G / c,
            mismatch=self.mismatch / c, mismatch_spec=self.mismatch_spec / c,
            sigma_star=self.sigma_star / c, scale=1.0,
        )

    def rows(self):
        """Yield ``(k, round, D, B, G, mismatch)`` with 1-indexed ``k``."""
        for k in range(self.r):
            for ell in range(self.rounds + 1):
                yield (k + 1, ell, self.D[k, ell], self.B[k, ell], self.G[k, ell],
                       self.mismatch[k, ell])


def decompose_errors(run: DeflationRun, instance) -> DeflationTrace:
    """Fill ``D``, ``B``, ``G`` and target mismatch for every ``(k, round)``.

    Round 0 uses the initial pairs against ``Y_{k,0}`` (the same target as
    round 1).  When the clean spectrum has tied values among the first ``r``
    components, ``B`` and ``G`` are left NaN and ``degenerate`` is set.
    """
    r, L = run.r, run.rounds
    shape = (r, L + 1)
    D = np.full(shape, np.nan)
    B = np.full(shape, np.nan)
    G = np.full(shape, np.nan)
    mis = np.full(shape, np.nan)
    mis_spec = np.full(shape, np.nan)
    active = np.zeros(shape, dtype=bool)
    r_eff = min(r, instance.r_star)

    degenerate = False
    clean = None
    try:
        clean = exact_sequential_targets(instance.Y_clean, min(r, min(instance.Y.shape)))
    except DegenerateGapError:
        degenerate = True
    stars = clean.components if clean is not None else None

    for k in range(r):
        s_k = run.activation[k]
        for ell in range(L + 1):
            active[k, ell] = ell >= s_k
            target = run.target(k, max(ell, 1))
            P = run.product(k, ell)
            fit, _ = _fit_product(target)
            if fit is not None:
                D[k, ell] = np.linalg.norm(P - fit)
            if stars is None:
                continue
            star_k = stars[k]
            G[k, ell] = np.linalg.norm(P - star_k)
            diff = target - clean.targets[k]
            mis[k, ell] = np.linalg.norm(diff)
            mis_spec[k, ell] = np.linalg.norm(diff, 2)
            if fit is not None:
                B[k, ell] = np.linalg.norm(fit - star_k)

    W_norm = np.linalg.norm(instance.W_star)
    rel = np.array([np.linalg.norm(instance.W_star - run.weight(ell)) / W_norm
                    for ell in range(L + 1)])
    sigma_star = instance.sigma_raw[:r_eff].copy()
    return DeflationTrace(
        D=D, B=B, G=G, mismatch=mis, mismatch_spec=mis_spec, rel_weight_error=rel,
        active=active, activation=tuple(run.activation), sigma_star=sigma_star,
        scale=instance.y_scale, degenerate=degenerate,
        meta={"method": run.method, "seed": instance.seed},
    )


def nash_residual(run: DeflationRun, instance, round_: int | None = None) -> np.ndarray:
    """Best-response gap of each player given the predecessors of the same round.

    Entry ``k`` is ``||P_k - fit(Y - sum_{k'<k} P_k')||_F`` with every product
    taken at ``round_``; NaN flags a tied top singular value.
    """
    round_ = run.rounds if round_ is None else round_
    out = np.full(run.r, np.nan)
    for k in range(run.r):
        target = run.Y - run.weight(round_, upto=k) @ run.X if k else run.Y
        fit, _ = _fit_product(target)
        if fit is not None:
            out[k] = np.linalg.norm(run.product(k, round_) - fit)
    return out


def relative_weight_error(W_star, W_hat) -> float:
    return float(np.linalg.norm(W_star - W_hat) / np.linalg.norm(W_star))
