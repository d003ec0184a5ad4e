"""Experiment families, run configuration and output files."""
from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from . import __version__
from .core import SpectralProfile, generate_instance
from .deflation import ParallelConfig, exact_sequential_targets, parallel_deflate, sequential_deflate
from .discovery import DiscoveryConfig, adapad_train, heterogeneous_stack
from .errors import ConfigError, NoFitError
from .metrics import decompose_errors
from .rank1 import Rank1Config, estimate_contraction
from .report import AGG_COLUMNS, aggregate, emit_trace, trace_rows
from .runtime import run_sharded, thread_cap, usable_cores
from .theory import detect_start, envelope, fit_decay, noise_floor, rate_plan
from .verify import Check, run_suite

EXPERIMENTS = ("convergence", "self-correction", "noise", "bounds", "gap-sweep", "discover",
               "scaling", "verify")
PROFILES = ("exp", "power", "uniform", "lingap")
FORMATS = ("csv", "json")
FIT_FLOOR = 1e-12  # normalized G below this is rounding noise

DEFAULTS = {
    "convergence": dict(m=100, d=200, n=500, r_star=10, rounds=10, profiles=["exp", "power", "uniform"]),
    "self-correction": dict(m=50, d=80, n=200, r_star=5, rounds=30),
    "noise": dict(m=100, d=200, n=500, r_star=10, rounds=15, noise=[0.01, 0.1, 0.5, 1.0]),
    "bounds": dict(m=50, d=80, n=200, r_star=5, rounds=40),
    "gap-sweep": dict(m=50, d=80, n=200, r_star=5, rounds=30, profiles=["lingap"],
                      gaps=[0.01, 0.05, 0.1, 0.25, 0.5]),
    "discover": dict(m=20, d=30, n=240, r_star=4, rounds=20, noise=[0.01]),
    "scaling": dict(m=100, d=200, n=500, r_star=16, rounds=16, seeds=[1]),
    "verify": dict(seeds=[1]),
}
DISCOVERY_DEFAULTS = dict(ranks=[1, 1, 2, 2, 4, 4], r_max=4, budget=14, top_h=2, batches=4,
                          inner_iters=2, beta1=0.85, beta2=0.85, ema_mode="updated")


@dataclass
class RunConfig:
    """Fully resolved settings of one experiment invocation."""

    experiment: str
    m: int = 50
    d: int = 80
    n: int = 200
    r_star: int = 5
    rank: int | None = None  # fitted components, defaults to r_star
    profiles: list = field(default_factory=lambda: ["exp"])
    method: str = "als"
    inner_iters: int = 10
    rounds: int = 30
    q: float = math.inf  # Frobenius radius as a multiple of sigma*_1
    seeds: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    noise: list = field(default_factory=lambda: [0.0])
    gaps: list = field(default_factory=list)
    workers: int = 1
    discovery: dict = field(default_factory=dict)
    out: str = "results"
    format: str = "csv"

    @property
    def r(self) -> int:
        return self.r_star if self.rank is None else self.rank

    def validate(self) -> "RunConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if min(self.m, self.d, self.n, self.r_star) < 1 or self.r < 1:
            raise ConfigError("dimensions and rank must be positive")
        if self.r > min(self.m, self.d):
            raise ConfigError(f"rank {self.r} exceeds min(m, d)")
        for p in self.profiles:
            if p not in PROFILES:
                raise ConfigError(f"unknown profile {p!r}")
        if "lingap" in self.profiles and not self.gaps:
            raise ConfigError("the lingap profile needs at least one --gap")
        if any(not 0 < g < 1 for g in self.gaps):
            raise ConfigError("gap ratios must lie in (0, 1)")
        if self.method not in ("als", "gd"):
            raise ConfigError(f"unknown method {self.method!r}")
        if self.inner_iters < 1 or self.rounds < 1:
            raise ConfigError("inner iterations and rounds must be positive")
        if not (math.isinf(self.q) or self.q >= 1.0):
            raise ConfigError("q must be inf or at least 1 (units of sigma*_1)")
        if not self.seeds or any(int(s) != s or s < 0 for s in self.seeds):
            raise ConfigError("seeds must be nonnegative integers")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if any(e < 0 for e in self.noise) or not self.noise:
            raise ConfigError("noise levels must be nonnegative")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        if self.format not in FORMATS:
            raise ConfigError(f"unknown format {self.format!r}")
        unknown = set(self.discovery) - set(DISCOVERY_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown discovery keys {sorted(unknown)}")
        return self

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["q"] = "inf" if math.isinf(self.q) else self.q
        doc["rank"] = self.r
        doc["discovery"] = {**DISCOVERY_DEFAULTS, **self.discovery}
        return doc

    def rank1(self) -> Rank1Config:
        return Rank1Config(method=self.method, inner_iters=self.inner_iters)


def parse_q(value) -> float:
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinity"):
        return math.inf
    return float(value)


def resolve_config(experiment: str, file_doc: dict | None = None,
                   overrides: dict | None = None) -> RunConfig:
    """Merge defaults, a config document and explicit overrides, in that order."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    names = {f.name for f in dataclasses.fields(RunConfig)}
    doc = dict(DEFAULTS[experiment])
    for layer in (file_doc or {}, overrides or {}):
        for key, value in layer.items():
            if key == "experiment":
                if value != experiment:
                    raise ConfigError(f"config is for {value!r}, not {experiment!r}")
                continue
            if key not in names:
                raise ConfigError(f"unknown config key {key!r}")
            if value is not None:
                doc[key] = value
    if "q" in doc:
        doc["q"] = parse_q(doc["q"])
    if isinstance(doc.get("profiles"), str):
        doc["profiles"] = [doc["profiles"]]
    if doc.get("gaps") and "profiles" not in (overrides or {}) and "profiles" not in (file_doc or {}):
        doc["profiles"] = ["lingap"]
    return RunConfig(experiment=experiment, **doc).validate()


@dataclass
class RunReport:
    config: RunConfig
    files: list
    checks: list

    @property
    def status(self) -> int:
        """0 when every evaluated check passed, 2 otherwise."""
        return 2 if any(c.passed is False for c in self.checks) else 0


def _check_dict(c: Check) -> dict:
    return {"name": c.name, "passed": None if c.passed is None else bool(c.passed),
            "value": None if c.value is None or not math.isfinite(c.value) else float(c.value),
            "threshold": None if c.threshold is None else float(c.threshold), "detail": c.detail}


def _profile(name: str, gap: float | None):
    return SpectralProfile.linear_gap(gap) if name == "lingap" else SpectralProfile(name)


def _instance(cfg: RunConfig, seed: int, profile="exp", noise=0.0, gap=None):
    return generate_instance(cfg.m, cfg.d, cfg.n, cfg.r_star, _profile(profile, gap),
                             noise=noise, seed=seed)


def _parallel(cfg: RunConfig, inst):
    Q = cfg.q * inst.y_scale if math.isfinite(cfg.q) else math.inf
    pc = ParallelConfig(r=cfg.r, rounds=cfg.rounds, rank1=cfg.rank1(), Q=Q)
    return parallel_deflate(inst, pc, workers=cfg.workers)


def _sequential(cfg: RunConfig, inst):
    return sequential_deflate(inst, cfg.r, rank1=cfg.rank1(), rounds=max(cfg.rounds, cfg.r))


def _tag(x: float) -> str:
    return f"{x:g}"


def _map_seeds(cfg: RunConfig, fn):
    """``fn(seed)`` for every seed, concurrently, results in seed order."""
    cap = thread_cap() or usable_cores()
    workers = max(1, min(len(cfg.seeds), cap))
    if workers == 1:
        return [fn(s) for s in cfg.seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, cfg.seeds))


# ---------------------------------------------------------------- experiments

def _convergence(cfg: RunConfig):
    def one(seed):
        rows, finals = [], {}
        for profile in cfg.profiles:
            for gap in (cfg.gaps if profile == "lingap" else [None]):
                inst = _instance(cfg, seed, profile, cfg.noise[0], gap)
                label = profile if gap is None else f"{profile}-g{_tag(gap)}"
                for method, run in (("parallel", _parallel(cfg, inst)),
                                    ("sequential", _sequential(cfg, inst))):
                    tr = decompose_errors(run, inst).scaled()
                    rows += trace_rows(tr, run_id=f"convergence-{label}-{method}-s{seed}",
                                       seed=seed, experiment=cfg.experiment, profile=label,
                                       method=method)
                    finals[(label, method)] = float(tr.rel_weight_error[-1])
        return rows, finals

    results = _map_seeds(cfg, one)
    checks = []
    final = lambda lab, meth: float(np.median([f[(lab, meth)] for _, f in results]))  # noqa: E731
    labels = {lab for _, f in results for lab, _ in f}
    if "exp" in labels:
        v = final("exp", "parallel")
        checks.append(Check("parallel_final_error_exp", v <= 6.3e-3, v, 6.3e-3,
                            "median final relative weight error"))
    for lab in ("exp", "power"):
        if lab in labels:
            ratio = final(lab, "parallel") / final(lab, "sequential")
            checks.append(Check(f"parallel_over_sequential_{lab}", ratio <= 2.0, ratio, 2.0,
                                f"parallel {final(lab, 'parallel'):.3g} "
                                f"sequential {final(lab, 'sequential'):.3g}"))
    return results, checks, {}


def _self_correction(cfg: RunConfig):
    def one(seed):
        rows, stats = [], {}
        for profile in cfg.profiles:
            inst = _instance(cfg, seed, profile, cfg.noise[0], cfg.gaps[0] if cfg.gaps else None)
            run = _parallel(cfg, inst)
            raw = decompose_errors(run, inst)
            clean = exact_sequential_targets(inst.Y_clean, cfg.r)
            tr = raw.scaled()
            rows += trace_rows(tr, run_id=f"self-correction-{profile}-parallel-s{seed}", seed=seed,
                               experiment=cfg.experiment, profile=profile, method="parallel")
            L = cfg.rounds
            for k in range(cfg.r):
                s_k = run.activation[k]
                if s_k > L:
                    continue
                norm = np.linalg.norm(clean.targets[k])
                mis = raw.mismatch[k] / norm if norm > 0 else raw.mismatch[k]
                stats[(profile, k + 1)] = {
                    "mismatch": mis[L] / mis[s_k] if mis[s_k] > 0 else 0.0,
                    "D": raw.D[k, L] / raw.D[k, s_k] if raw.D[k, s_k] > 0 else 0.0,
                    "B": raw.B[k, L] / raw.B[k, s_k] if raw.B[k, s_k] > 0 else 0.0,
                }
        return rows, stats

    results = _map_seeds(cfg, one)
    checks = []
    profile = cfg.profiles[0]

    def med(k, key):
        vals = [st[(profile, k)][key] for _, st in results if (profile, k) in st]
        return float(np.median(vals)) if vals else math.nan

    for k in range(2, min(4, cfg.r) + 1):
        v = med(k, "mismatch")
        checks.append(Check(f"mismatch_drop_worker{k}", bool(v <= 1 / 3), v, 1 / 3,
                            "median normalized mismatch at L over value at activation"))
    if cfg.r >= 3:
        for key in ("D", "B"):
            v = med(3, key)
            checks.append(Check(f"worker3_{key}_drop", bool(v <= 0.2), v, 0.2,
                                "final over activation, 5x decrease needed"))
    return results, checks, {}


def _noise(cfg: RunConfig):
    profile = cfg.profiles[0]

    def one(seed):
        rows, stats = [], {}
        for eps in cfg.noise:
            inst = _instance(cfg, seed, profile, eps, cfg.gaps[0] if cfg.gaps else None)
            errs = {}
            for method, run in (("parallel", _parallel(cfg, inst)),
                                ("sequential", _sequential(cfg, inst))):
                tr = decompose_errors(run, inst).scaled()
                rows += trace_rows(tr, run_id=f"noise-e{_tag(eps)}-{method}-s{seed}", seed=seed,
                                   experiment=cfg.experiment, profile=profile, method=method)
                errs[method] = float(np.linalg.norm(inst.W_star - run.weight()))
            stats[eps] = errs
        return rows, stats

    results = _map_seeds(cfg, one)
    checks = []
    for eps in cfg.noise:
        ratios = [st[eps]["parallel"] / st[eps]["sequential"] for _, st in results]
        lo, hi = min(ratios), max(ratios)
        checks.append(Check(f"noise_ratio_e{_tag(eps)}", bool(0.95 <= lo and hi <= 1.05), hi,
                            1.05, f"per-seed ratios in [{lo:.4f}, {hi:.4f}]"))
        if eps >= 0.1:
            floor = noise_floor(eps, cfg.r_star, cfg.d, cfg.n)
            errs = [st[eps][m] / floor for _, st in results for m in ("parallel", "sequential")]
            worst = max(max(errs), 1 / min(errs))
            checks.append(Check(f"noise_floor_e{_tag(eps)}", bool(worst <= 3.0), worst, 3.0,
                                f"error over floor in [{min(errs):.3f}, {max(errs):.3f}]"))
    return results, checks, {}


def _bounds(cfg: RunConfig):
    profile = cfg.profiles[0]

    def one(seed):
        inst = _instance(cfg, seed, profile, cfg.noise[0], cfg.gaps[0] if cfg.gaps else None)
        F = [estimate_contraction(inst, k, cfg.rank1()).value for k in range(1, cfg.r + 1)]
        plan = rate_plan(inst, F, Q=cfg.q if math.isfinite(cfg.q) else 2.0)
        run = _parallel(cfg, inst)
        tr = decompose_errors(run, inst).scaled()
        L = cfg.rounds
        env = np.full((cfg.r, L + 1), np.nan)
        stats = []
        for k in range(cfg.r):
            s_k = run.activation[k]
            G = tr.G[k]
            s_hat = detect_start(G, s_k, floor=FIT_FLOOR)
            try:
                m_hat = fit_decay(G, s_k, floor=FIT_FLOOR).m_hat
            except NoFitError:
                m_hat = math.nan
            dominated = None
            if s_hat is not None:
                ell = np.arange(s_hat, L + 1)
                env[k, s_hat:] = envelope(plan.R[k], plan.m[k], s_hat, ell)
                tail = np.arange(s_hat + 2, L + 1)
                dominated = bool(np.all(G[tail] <= env[k, tail] + FIT_FLOOR))
            stats.append({"k": k + 1, "F_hat": F[k], "m": float(plan.m[k]), "m_hat": m_hat,
                          "s_hat": s_hat, "dominated": dominated})
        rows = trace_rows(tr, run_id=f"bounds-{profile}-parallel-s{seed}", seed=seed,
                          experiment=cfg.experiment, profile=profile, method="parallel",
                          envelope=env)
        return rows, stats

    results = _map_seeds(cfg, one)
    checks = []
    worst_k, worst = None, -math.inf
    for k in range(cfg.r):
        diffs = [abs(st[k]["m_hat"] - st[k]["m"]) for _, st in results
                 if math.isfinite(st[k]["m_hat"])]
        if diffs and np.median(diffs) > worst:
            worst, worst_k = float(np.median(diffs)), k + 1
    checks.append(Check("rate_fit_vs_recurrence", bool(worst <= 0.15), worst, 0.15,
                        f"worst median |m_hat - m| at k={worst_k}"))
    late = [(st[k]["s_hat"], k + 1) for _, st in results for k in range(cfg.r)]
    ok = all(s is not None and s <= k + 3 for s, k in late)
    checks.append(Check("warmup_detected_by_k_plus_3", ok, detail=f"s_hat per cell {late}"))
    cells = [st[k]["dominated"] for _, st in results for k in range(cfg.r)]
    frac = float(np.mean([c is True for c in cells]))
    checks.append(Check("envelope_domination", bool(frac >= 0.95), frac, 0.95,
                        "fraction of (seed, k) cells"))
    extras = {"fits": [dict(seed=seed, **s) for seed, (_, st) in zip(cfg.seeds, results) for s in st]}
    return results, checks, extras


def _gap_sweep(cfg: RunConfig):
    def one(seed):
        rows, stats = [], {}
        for g in cfg.gaps:
            inst = _instance(cfg, seed, "lingap", cfg.noise[0], g)
            run = _parallel(cfg, inst)
            tr = decompose_errors(run, inst).scaled()
            label = f"lingap-g{_tag(g)}"
            rows += trace_rows(tr, run_id=f"gap-sweep-{label}-parallel-s{seed}", seed=seed,
                               experiment=cfg.experiment, profile=label, method="parallel")
            rel = tr.rel_weight_error
            stats[g] = (float(rel[-1]), int(np.argmax(rel <= 2 * rel[-1])))
        return rows, stats

    results = _map_seeds(cfg, one)
    checks = []
    med_final = {g: float(np.median([st[g][0] for _, st in results])) for g in cfg.gaps}
    med_rounds = {g: float(np.median([st[g][1] for _, st in results])) for g in cfg.gaps}
    worst = max(med_final.values())
    checks.append(Check("gap_final_error", bool(worst < 1e-4), worst, 1e-4,
                        "max over gap ratios of the median final error"))
    order = sorted(cfg.gaps)
    seq = [med_rounds[g] for g in order]
    mono = all(b <= a for a, b in zip(seq, seq[1:]))
    checks.append(Check("rounds_to_floor_nonincreasing", mono,
                        detail="median rounds to 2x final: "
                        + ", ".join(f"g={_tag(g)}:{med_rounds[g]:g}" for g in order)))
    return results, checks, {}


def discovery_config(cfg: RunConfig, scoring: str = "importance") -> tuple[DiscoveryConfig, list]:
    d = {**DISCOVERY_DEFAULTS, **cfg.discovery}
    ranks = [int(r) for r in d["ranks"]]
    dc = DiscoveryConfig(
        M=len(ranks), r_max=int(d["r_max"]), budget=int(d["budget"]), batches=int(d["batches"]),
        top_h=int(d["top_h"]), beta1=float(d["beta1"]), beta2=float(d["beta2"]),
        rank1=Rank1Config(inner_iters=int(d["inner_iters"])), rounds=cfg.rounds,
        scoring=scoring, ema_mode=d["ema_mode"],
    )
    return dc, ranks


def _discover(cfg: RunConfig):
    profile = cfg.profiles[0]

    def one(seed):
        rows, stats = [], {}
        for scoring in ("importance", "uniform"):
            dc, ranks = discovery_config(cfg, scoring)
            stack = heterogeneous_stack(ranks, m=cfg.m, d=cfg.d, n=cfg.n, profile=profile,
                                        noise=cfg.noise[0], seed=seed)
            res = adapad_train(stack, dc, seed=seed, traces=True)
            for i, tr in enumerate(res.traces):
                rows += trace_rows(tr.scaled(), run_id=f"discover-{scoring}-mod{i}-s{seed}",
                                   seed=seed, experiment=cfg.experiment, profile=f"{profile}-mod{i}",
                                   method=scoring)
            rho = spearmanr(ranks, res.ranks).statistic if len(set(res.ranks)) > 1 else 0.0
            stats[scoring] = {
                "ranks": list(res.ranks), "true": ranks, "errors": res.errors.tolist(),
                "total_error": res.total_error, "spearman": float(rho),
                "budget_ok": bool(np.all(res.rank_history.sum(axis=1) <= dc.budget)),
            }
        return rows, stats

    results = _map_seeds(cfg, one)
    checks = []
    rho = float(np.median([st["importance"]["spearman"] for _, st in results]))
    checks.append(Check("rank_spearman", bool(rho >= 0.5), rho, 0.5, "median over seeds"))
    ok = all(st[s]["budget_ok"] for _, st in results for s in st)
    checks.append(Check("budget_every_round", ok))
    scored = float(np.median([st["importance"]["total_error"] for _, st in results]))
    uniform = float(np.median([st["uniform"]["total_error"] for _, st in results]))
    checks.append(Check("ablation_uniform_not_better", bool(uniform >= scored), uniform, scored,
                        f"median total error: scored {scored:.4g}, uniform {uniform:.4g}"))
    table = [dict(seed=seed, scoring=s, module=i, true_rank=st[s]["true"][i],
                  rank=st[s]["ranks"][i], error=st[s]["errors"][i])
             for seed, (_, st) in zip(cfg.seeds, results) for s in ("importance", "uniform")
             for i in range(len(st[s]["ranks"]))]
    return results, checks, {"ranks": table}


SCALING_WORKERS = (1, 2, 4)


def _scaling(cfg: RunConfig):
    profile = cfg.profiles[0]
    Ps = sorted(set(SCALING_WORKERS) | {cfg.workers})
    results, timings, same = [], [], True
    speed = {}
    for seed in cfg.seeds:  # timed runs stay sequential so they do not compete
        inst = _instance(cfg, seed, profile, cfg.noise[0], cfg.gaps[0] if cfg.gaps else None)
        Q = cfg.q * inst.y_scale if math.isfinite(cfg.q) else math.inf
        pc = ParallelConfig(r=cfg.r, rounds=cfg.rounds, rank1=cfg.rank1(), Q=Q)
        runs = {P: run_sharded(inst, pc, P) for P in Ps}
        base = runs[Ps[0]].run
        for P, res in runs.items():
            same &= bool(np.array_equal(base.A_hist, res.run.A_hist)
                         and np.array_equal(base.B_hist, res.run.B_hist))
            for ell, sec in enumerate(res.seconds, start=1):
                timings.append(dict(seed=seed, P=P, r=cfg.r, round=ell, seconds=sec))
            speed.setdefault(P, []).append(res.mean_seconds)
        tr = decompose_errors(base, inst).scaled()
        rows = trace_rows(tr, run_id=f"scaling-{profile}-parallel-s{seed}", seed=seed,
                          experiment=cfg.experiment, profile=profile, method="parallel")
        results.append((rows, {}))
    checks = [Check("traces_identical_across_P", same, detail=f"P in {Ps}")]
    t1 = float(np.median(speed[1]))
    cores = usable_cores()
    timing_checks = []
    for P, need in ((2, 1.3), (4, 1.5)):
        if P not in speed:
            continue
        sp = t1 / float(np.median(speed[P]))
        if cores >= 4:
            timing_checks.append(Check(f"speedup_P{P}", bool(sp >= need), sp, need))
        else:
            timing_checks.append(Check(f"speedup_P{P}", None, sp, need,
                                       f"host has {cores} usable core(s), needs 4"))
    return results, checks, {"timings": timings, "timing_checks": timing_checks}


RUNNERS = {
    "convergence": _convergence,
    "self-correction": _self_correction,
    "noise": _noise,
    "bounds": _bounds,
    "gap-sweep": _gap_sweep,
    "discover": _discover,
    "scaling": _scaling,
}


def _emit_table(rows, columns, path, fmt, meta):
    return emit_trace(rows, path, fmt=fmt, meta=meta, columns=columns)


def run_experiment(cfg: RunConfig) -> RunReport:
    """Run one experiment family and write every output file under ``cfg.out``."""
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ext = cfg.format
    meta = {"config": cfg.to_dict(), "version": __version__, "seeds": list(cfg.seeds)}
    files = []

    if cfg.experiment == "verify":
        checks = [c for seed in cfg.seeds for c in _prefixed(run_suite(seed), seed, cfg.seeds)]
        rows = [_check_dict(c) for c in checks]
        cols = ("name", "passed", "value", "threshold", "detail")
        files.append(_emit_table(rows, cols, out / f"verify_checks.{ext}", ext, meta))
        return RunReport(cfg, files, checks)

    results, checks, extras = RUNNERS[cfg.experiment](cfg)
    all_rows = []
    for seed, (rows, _) in zip(cfg.seeds, results):
        files.append(emit_trace(rows, out / f"{cfg.experiment}_seed{seed}.{ext}", fmt=ext,
                                meta={**meta, "seed": seed}))
        all_rows += rows
    agg_meta = {**meta, "checks": [_check_dict(c) for c in checks]}
    files.append(_emit_table(aggregate(all_rows), AGG_COLUMNS,
                             out / f"{cfg.experiment}_aggregate.{ext}", ext, agg_meta))

    if "fits" in extras:
        cols = ("seed", "k", "F_hat", "m", "m_hat", "s_hat", "dominated")
        files.append(_emit_table(extras["fits"], cols, out / f"bounds_fits.{ext}", ext, meta))
    if "ranks" in extras:
        cols = ("seed", "scoring", "module", "true_rank", "rank", "error")
        files.append(_emit_table(extras["ranks"], cols, out / f"discover_ranks.{ext}", ext, meta))
    if "timings" in extras:
        timing_checks = extras["timing_checks"]
        tmeta = {**meta, "cores": usable_cores(),
                 "checks": [_check_dict(c) for c in timing_checks]}
        cols = ("seed", "P", "r", "round", "seconds")
        files.append(_emit_table(extras["timings"], cols, out / f"scaling_timings.{ext}", ext, tmeta))
        checks = checks + timing_checks
    return RunReport(cfg, files, checks)


def _prefixed(checks, seed, seeds):
    if len(seeds) == 1:
        return checks
    return [dataclasses.replace(c, name=f"{c.name}[s{seed}]") for c in checks]


def load_config_file(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc
