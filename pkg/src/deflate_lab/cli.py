"""Command-line entry point: ``deflate-lab <experiment> [flags]``."""
from __future__ import annotations

import argparse
import logging
import sys

from .errors import DegenerateGapError, DeflateError
from .experiments import EXPERIMENTS, FORMATS, PROFILES, load_config_file, parse_q, resolve_config, run_experiment
from .runtime import thread_cap

EXIT_OK, EXIT_ERROR, EXIT_MISS = 0, 1, 2
log = logging.getLogger("deflate_lab")

# flag dest -> config key
FLAG_KEYS = {
    "m": "m", "d": "d", "n": "n", "rank": "r_star", "rounds": "rounds",
    "inner_iters": "inner_iters", "method": "method", "profile": "profiles", "seed": "seeds",
    "noise": "noise", "gap": "gaps", "workers": "workers", "q": "q", "out": "out",
    "format": "format",
}


def _q(text: str) -> float:
    try:
        return parse_q(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected 'inf' or a number, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deflate-lab",
        description="Parallel deflation experiments for low-rank bilinear regression.",
    )
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", metavar="PATH", help="JSON config; flags override it")
    parser.add_argument("--seed", type=int, action="append", help="repeatable")
    parser.add_argument("--m", type=int)
    parser.add_argument("--d", type=int)
    parser.add_argument("--n", type=int)
    parser.add_argument("--rank", type=int, help="true rank r*; components fitted")
    parser.add_argument("--rounds", type=int, help="communication rounds L")
    parser.add_argument("--inner-iters", type=int, help="subroutine iterations T per round")
    parser.add_argument("--method", choices=("als", "gd"))
    parser.add_argument("--profile", choices=PROFILES)
    parser.add_argument("--noise", type=float, action="append", metavar="E", help="repeatable")
    parser.add_argument("--gap", type=float, action="append", metavar="G", help="repeatable")
    parser.add_argument("--workers", type=int, metavar="P")
    parser.add_argument("--q", type=_q, metavar="{inf|REAL}",
                        help="Frobenius radius in units of sigma*_1")
    parser.add_argument("--out", metavar="DIR")
    parser.add_argument("--format", choices=FORMATS)
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def overrides_from_args(args: argparse.Namespace) -> dict:
    return {key: getattr(args, dest) for dest, key in FLAG_KEYS.items()
            if getattr(args, dest) is not None}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        thread_cap()
        file_doc = load_config_file(args.config) if args.config else None
        cfg = resolve_config(args.experiment, file_doc, overrides_from_args(args))
        log.info("running %s with seeds %s", cfg.experiment, cfg.seeds)
        report = run_experiment(cfg)
    except DegenerateGapError as exc:
        print(f"error: {exc}\nhint: the spectrum has tied values; use a gapped profile "
              "(exp, power or lingap) or fewer components", file=sys.stderr)
        return EXIT_ERROR
    except (DeflateError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    for check in report.checks:
        print(check.line())
    for path in report.files:
        print(f"wrote {path}")
    return report.status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
