"""Command line entry point: ``addbo run | synth | validate``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from .config import ConfigError, load
from .runner import run_experiment
from .synthetic import SyntheticSpec, build_composite


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="addbo", description="Additive GP bandit benchmarks")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int, help="override loop.base_seed")
    r.add_argument("--replicates", type=int, help="override loop.replicates")
    r.add_argument("--threads", type=int, help="worker processes (default: $ADDBO_THREADS or CPU count)")

    s = sub.add_parser("synth", help="print a synthetic function fixture as JSON")
    s.add_argument("--D", type=int, required=True)
    s.add_argument("--dtilde", type=int, required=True)
    s.add_argument("--Mtilde", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)

    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("--config", required=True)
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    try:
        if args.command == "synth":
            f = build_composite(SyntheticSpec(args.D, args.dtilde, args.Mtilde, args.seed))
            print(json.dumps(f.fixture(), indent=2))
            return 0
        cfg = load(args.config)
        if args.command == "validate":
            print(f"ok: {len(cfg.strategies)} strategies, {cfg.replicates} replicates, T={cfg.T}")
            return 0
        flat = dict(cfg.flat)
        if args.seed is not None:
            flat["loop.base_seed"] = args.seed
            cfg = dataclasses.replace(cfg, base_seed=args.seed, flat=flat)
        if args.replicates is not None:
            flat["loop.replicates"] = args.replicates
            cfg = dataclasses.replace(cfg, replicates=args.replicates, flat=flat)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        manifest = run_experiment(cfg, args.out, threads=args.threads)
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1
    if manifest["failures"]:
        print(f"{len(manifest['failures'])} replicate(s) failed; see manifest.json", file=sys.stderr)
        return 1
    print(f"wrote {len(manifest['files'])} result files to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
