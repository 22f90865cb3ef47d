"""Command line entry point: ``spde-bayes <study> --config FILE [--seed N] [--out DIR] [--threads N]``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .config import STUDY_KINDS, ConfigError, parse_config, with_overrides
from .report import emit_report
from .simulate import SimulationError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spde-bayes", description="Simulation and Bayesian reaction-function studies.")
    ap.add_argument("study", choices=STUDY_KINDS)
    ap.add_argument("--config", required=True, help="JSON study configuration")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--out", default=None, help="output directory (overrides out_dir)")
    ap.add_argument("--threads", type=int, default=None, help="worker threads (default: $SPDE_BAYES_THREADS or 1)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _threads(arg):
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("SPDE_BAYES_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"SPDE_BAYES_THREADS must be an integer, got {env!r}", "SPDE_BAYES_THREADS") from None
    return 1


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    from .studies import STUDIES

    try:
        cfg = parse_config(args.config)
        if cfg.kind != args.study:
            raise ConfigError(f"config is for study {cfg.kind!r}, command asked for {args.study!r}", "kind")
        cfg = with_overrides(cfg, seed=args.seed, out_dir=args.out)
        threads = _threads(args.threads)
    except (ConfigError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    fn = STUDIES[cfg.kind]
    try:
        if cfg.kind in ("simulate", "posterior"):
            report = fn(cfg, out_dir=cfg.out_dir, threads=threads)
        else:
            report = fn(cfg, threads=threads)
    except (SimulationError, np.linalg.LinAlgError, FloatingPointError) as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    for p in emit_report(report, cfg.out_dir):
        print(p)
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
