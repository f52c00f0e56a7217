"""Command line entry point: ``epigpc {offline,online,sweep,mc,report}``.

Exit codes: 0 success, 2 configuration or usage error, 3 model/numerics failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .config import ConfigError, RunConfig
from .models import ModelError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICS = 3


def parse_taus(text: str) -> list:
    if text.strip() == "":
        return []
    try:
        return [float(t) for t in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"--tau: cannot parse {text!r} as comma-separated numbers") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epigpc",
                                     description="Epistemic post-processing of gPC surrogates")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, tau=True):
        p.add_argument("--config", type=Path, help="YAML run configuration")
        p.add_argument("--out", type=Path, help="output directory (overrides config)")
        if tau:
            p.add_argument("--tau", help="comma-separated tau values (overrides config)")
        return p

    p = common(sub.add_parser("offline", help="build maximum-variance surrogates"), tau=False)
    p.add_argument("--no-cache", action="store_true", help="disable the evaluation cache")
    common(sub.add_parser("online", help="tau sweep and densities from offline artifacts"))
    p = common(sub.add_parser("sweep", help="compare surrogates against direct runs per tau"))
    p.add_argument("--no-cache", action="store_true")
    p = common(sub.add_parser("mc", help="Monte Carlo reference moments"))
    p.add_argument("--seed", type=int, help="random seed (overrides config)")
    p.add_argument("--target", choices=("model", "surrogate"), default="model")
    common(sub.add_parser("report", help="collect tables and summaries"), tau=False)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        out = args.out if args.out is not None else Path(cfg.output)
        taus = parse_taus(args.tau) if getattr(args, "tau", None) is not None else None
        no_cache = getattr(args, "no_cache", False)
        use_cache = False if no_cache else None
        if args.command == "offline":
            pipeline.run_offline(cfg, out, use_cache=use_cache)
        elif args.command == "online":
            pipeline.run_online(cfg, out, taus=taus)
        elif args.command == "sweep":
            pipeline.run_sweep(cfg, out, taus=taus, use_cache=use_cache)
        elif args.command == "mc":
            pipeline.run_mc(cfg, out, taus=taus, seed=args.seed, target=args.target)
        else:
            pipeline.report(cfg, out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ModelError, np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICS
    except ValueError as exc:
        # invalid parameters surfaced by the numerical layers
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
