"""Always-on invariant suite behind the ``verify`` subcommand.

Every check returns a :class:`Check`; ``passed`` is ``None`` when a check
could not run on this host.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import generate_instance, rng_for, spectral_gaps
from .deflation import ParallelConfig, parallel_deflate, sequential_deflate
from .metrics import decompose_errors, nash_residual
from .rank1 import ComponentPair, Gram, Rank1Config, estimate_contraction, gradients, objective, rank1_als
from .runtime import run_sharded
from .theory import effective_rates, noiseless_bound, rate_plan, surrogate_sequences, w_hat, w_hat_bound

TOL = 1e-9
VERIFY_STREAM = 9


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool | None
    value: float | None = None
    threshold: float | None = None
    detail: str = ""

    def line(self) -> str:
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[self.passed]
        bits = [f"[{status}] {self.name}"]
        if self.value is not None:
            bits.append(f"value={self.value:.4g}")
        if self.threshold is not None:
            bits.append(f"threshold={self.threshold:.4g}")
        if self.detail:
            bits.append(self.detail)
        return " ".join(bits)


def _rng(seed, tag):
    return rng_for(seed, VERIFY_STREAM, tag)


def check_weyl(seed: int = 0, pairs: int = 200) -> Check:
    rng = _rng(seed, 1)
    worst = -np.inf
    for _ in range(pairs):
        m, n = rng.integers(2, 12, size=2)
        M = rng.standard_normal((m, n))
        D = rng.standard_normal((m, n)) * 10.0 ** rng.uniform(-4, 0)
        s0 = np.linalg.svd(M, compute_uv=False)
        s1 = np.linalg.svd(M + D, compute_uv=False)
        worst = max(worst, np.max(np.abs(s1 - s0)) - np.linalg.norm(D, 2))
    return Check("weyl", bool(worst <= TOL), worst, TOL, f"{pairs} pairs, max excess")


def check_wedin(seed: int = 0, pairs: int = 200) -> Check:
    rng = _rng(seed, 2)
    worst = -np.inf
    done = 0
    while done < pairs:
        m, n = rng.integers(2, 12, size=2)
        M = rng.standard_normal((m, n))
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
        gap = s[0] - (s[1] if s.size > 1 else 0.0)
        if gap <= 1e-3:
            continue
        D = rng.standard_normal((m, n))
        D *= rng.uniform(0.01, 0.49) * gap / np.linalg.norm(D, 2)
        Ut, st, Vtt = np.linalg.svd(M + D, full_matrices=True)
        u1, v1 = U[:, 0], Vt[0]
        others = np.concatenate([st[1:], np.zeros(max(m, n) - st.size)])
        delta = min(np.min(np.abs(s[0] - others)) if others.size else np.inf, s[0])
        lhs = (1 - (u1 @ Ut[:, 0]) ** 2) + (1 - (v1 @ Vtt[0]) ** 2)
        rhs = (np.linalg.norm(D.T @ u1) ** 2 + np.linalg.norm(D @ v1) ** 2) / delta ** 2
        worst = max(worst, lhs - rhs)
        done += 1
    return Check("wedin", bool(worst <= TOL), worst, TOL, f"{pairs} pairs, max excess")


def check_als_one_sweep(seed: int = 0, trials: int = 20) -> Check:
    rng = _rng(seed, 3)
    worst = 0.0
    for _ in range(trials):
        m, d, n = rng.integers(3, 15), rng.integers(2, 10), 0
        n = d + int(rng.integers(1, 20))
        X = rng.standard_normal((d, n))
        a, b = rng.standard_normal(d), rng.standard_normal(m)
        Y = np.outer(b, a @ X)
        warm = ComponentPair(rng.standard_normal(d), rng.standard_normal(m))
        out = rank1_als(Y, X, 1, warm)
        worst = max(worst, np.linalg.norm(out.product(X) - Y) / np.linalg.norm(Y))
    return Check("als_one_sweep_exactness", bool(worst <= 1e-8), worst, 1e-8)


def check_als_monotone(seed: int = 0, trials: int = 20, sweeps: int = 15) -> Check:
    rng = _rng(seed, 4)
    worst = -np.inf
    for _ in range(trials):
        m, d = rng.integers(3, 20, size=2)
        n = d + int(rng.integers(1, 30))
        X = rng.standard_normal((d, n))
        Y = rng.standard_normal((m, n))
        gram = Gram(X)
        pair = ComponentPair(rng.standard_normal(d), rng.standard_normal(m))
        prev = objective(Y, X, pair)
        for _ in range(sweeps):
            pair = rank1_als(Y, X, 1, pair, gram=gram)
            cur = objective(Y, X, pair)
            worst = max(worst, (cur - prev) / max(prev, 1e-300))
            prev = cur
    return Check("als_monotonicity", bool(worst <= 1e-10), worst, 1e-10, "max relative increase")


def check_gd_gradient(seed: int = 0, trials: int = 10, h: float = 1e-5) -> Check:
    rng = _rng(seed, 5)
    worst = 0.0
    for _ in range(trials):
        m, d, n = 8, 10, 12
        X = rng.standard_normal((d, n))
        Y = rng.standard_normal((m, n))
        pair = ComponentPair(rng.standard_normal(d), rng.standard_normal(m))
        ga, gb = gradients(Y, X, pair)
        num_a = np.empty(d)
        num_b = np.empty(m)
        for i in range(d):
            e = np.zeros(d)
            e[i] = h
            num_a[i] = (objective(Y, X, ComponentPair(pair.a + e, pair.b))
                        - objective(Y, X, ComponentPair(pair.a - e, pair.b))) / (2 * h)
        for i in range(m):
            e = np.zeros(m)
            e[i] = h
            num_b[i] = (objective(Y, X, ComponentPair(pair.a, pair.b + e))
                        - objective(Y, X, ComponentPair(pair.a, pair.b - e))) / (2 * h)
        an = np.concatenate([ga, gb])
        nu = np.concatenate([num_a, num_b])
        worst = max(worst, np.linalg.norm(an - nu) / np.linalg.norm(an))
    return Check("gd_gradient_fd", bool(worst <= 1e-4), worst, 1e-4)


def check_rates(seed: int = 0, vectors: int = 1000) -> Check:
    rng = _rng(seed, 6)
    ok = True
    for _ in range(vectors):
        F = rng.uniform(1e-6, 1 - 1e-6, size=int(rng.integers(1, 30)))
        m = effective_rates(F)
        ok &= bool(np.all((m > 0) & (m < 1)) and np.all(np.diff(m) >= 0))
    return Check("rates_in_unit_interval", ok, detail=f"{vectors} random F vectors")


def check_w_hat(seed: int = 0, samples: int = 1000) -> Check:
    rng = _rng(seed, 7)
    a = np.exp(rng.uniform(math.log(1e-6), -1.0, size=samples))
    worst = max(w_hat(x) - w_hat_bound(x) for x in a)
    return Check("w_hat_upper_bound", bool(worst <= TOL), worst, TOL, f"{samples} samples")


def _clean_sigma(inst):
    return np.linalg.svd(inst.Y_clean, compute_uv=False)


def trace_checks(traces) -> list[Check]:
    """Row-wise triangle, mismatch and B-bound checks over ``(instance, run, trace)`` triples."""
    tri = mis = bb = -np.inf
    bb_rows = 0
    for inst, run, tr in traces:
        tri = max(tri, np.nanmax(tr.G - tr.D - tr.B))
        # the mismatch lemma builds targets and clean targets from the same Y
        for k in range(1 if inst.noise == 0 else tr.r, tr.r):
            pred = np.sum(tr.G[:k, :-1], axis=0)
            mis = max(mis, np.nanmax(tr.mismatch[k, 1:] - pred))
        sig = _clean_sigma(inst)
        gaps = spectral_gaps(sig[: inst.r_star] / sig[0])
        for k in range(min(tr.r, inst.r_star)):
            C = 3.0 * (sig[k] / sig[0]) / gaps[k] + 1.0
            half = 0.5 * np.min(np.abs(sig[k] - sig[k + 1:])) if k + 1 < sig.size else 0.5 * sig[k]
            hold = tr.mismatch_spec[k] < half
            if np.any(hold):
                bb_rows += int(hold.sum())
                bb = max(bb, np.nanmax((tr.B[k] - C * tr.mismatch[k])[hold]))
    tol = TOL
    return [
        Check("triangle_G_le_D_plus_B", bool(tri <= tol), tri, tol),
        Check("target_mismatch_bound", bool(mis <= tol), mis, tol),
        Check("B_bound_with_C_k", bool(bb <= tol), bb, tol, f"{bb_rows} rows under hypothesis"),
    ]


def check_surrogates(seed: int = 1) -> Check:
    inst = generate_instance(30, 40, 100, 3, "exp", seed=seed)
    cfg1 = Rank1Config(inner_iters=10)
    F = [estimate_contraction(inst, k, cfg1).value for k in range(1, 4)]
    plan = rate_plan(inst, F, Q=2.0)
    s = [int(v) for v in plan.s_exact]
    L = s[-1] + 10
    run = parallel_deflate(inst, ParallelConfig(r=3, rounds=L, rank1=cfg1, Q=2.0 * inst.y_scale,
                                                activation=tuple(s)))
    tr = decompose_errors(run, inst).scaled()
    D_b = [tr.D[k, s[k] - 1] for k in range(3)]
    sur = surrogate_sequences(plan, s, plan.s_hat, D_b, L)
    worst, where = -np.inf, None
    for k in range(3):
        gaps = {"B": tr.B[k] - sur.B_hat[k], "G": tr.G[k] - sur.G_hat[k]}
        gaps["G"][: s[k] - 1] = np.nan
        for name, gap in gaps.items():
            if np.all(np.isnan(gap)):
                continue
            ell = int(np.nanargmax(gap))
            if gap[ell] > worst:
                worst, where = float(gap[ell]), f"{name}[k={k + 1},round={ell}]"
    return Check("surrogate_domination", bool(worst <= TOL), worst, TOL,
                 f"worst at {where} s={s} s_hat={list(map(int, plan.s_hat))}")


def check_noiseless_bound(runs) -> Check:
    worst = -np.inf
    for inst, run, tr in runs:
        if inst.noise > 0:
            continue
        G_raw = tr.G[:, -1]  # traces here are in raw units
        if not np.all(np.isfinite(G_raw)):
            continue
        err = np.linalg.norm(inst.W_star - run.weight())
        worst = max(worst, err - noiseless_bound(inst, G_raw))
    return Check("noiseless_bound", bool(worst <= TOL), worst, TOL)


def check_nash(seed: int = 1) -> Check:
    inst = generate_instance(50, 80, 200, 5, "exp", seed=seed)
    run = parallel_deflate(inst, ParallelConfig(r=5, rounds=40))
    res = float(np.nanmax(nash_residual(run, inst)))
    thr = 1e-3 * inst.y_scale
    return Check("nash_residual", bool(res < thr), res, thr)


def check_worker_identity(seed: int = 1, workers=(1, 2, 4)) -> Check:
    inst = generate_instance(40, 60, 150, 8, "exp", seed=seed)
    cfg = ParallelConfig(r=8, rounds=10)
    runs = [run_sharded(inst, cfg, P).run for P in workers]
    same = all(np.array_equal(runs[0].A_hist, r.A_hist) and np.array_equal(runs[0].B_hist, r.B_hist)
               for r in runs[1:])
    return Check("bit_identical_across_workers", same, detail=f"P in {list(workers)}")


def run_suite(seed: int = 1) -> list[Check]:
    """Every invariant of the suite, in a fixed order."""
    checks = [
        check_weyl(seed), check_wedin(seed), check_als_one_sweep(seed), check_als_monotone(seed),
        check_gd_gradient(seed), check_rates(seed), check_w_hat(seed),
    ]
    runs = []
    for profile, noise in (("exp", 0.0), ("power", 0.0), ("exp", 0.05)):
        inst = generate_instance(30, 40, 100, 4, profile, noise=noise, seed=seed)
        for run in (parallel_deflate(inst, ParallelConfig(r=4, rounds=12)),
                    sequential_deflate(inst, 4, rounds=12)):
            runs.append((inst, run, decompose_errors(run, inst)))
    checks += trace_checks(runs)
    checks.append(check_surrogates(seed))
    checks.append(check_noiseless_bound(runs))
    checks.append(check_nash(seed))
    checks.append(check_worker_identity(seed))
    return checks
