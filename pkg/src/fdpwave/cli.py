"""Command line front end.

Exit codes: 0 success, 2 validation error, 3 runtime error (including a
failed ``verify``).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from datetime import datetime, timezone
from typing import Optional, Sequence

import numpy as np
import scipy

from . import __version__, config, experiments, kernels
from .errors import ComputationError, ValidationError

logger = logging.getLogger("fdpwave")

SUBCOMMANDS = ("simulate", "rate-sweep", "pointwise-sweep", "tails", "hodge", "verify")


def _threads(value: Optional[int]) -> int:
    if value is not None:
        if value < 1:
            raise ValidationError("--threads must be >= 1")
        return value
    env = os.environ.get("FDP_THREADS")
    if env is None or env == "":
        return 1
    try:
        t = int(env)
    except ValueError as exc:
        raise ValidationError(f"FDP_THREADS must be an integer, got {env!r}") from exc
    if t < 1:
        raise ValidationError("FDP_THREADS must be >= 1")
    return t


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from exc
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fdpwave", description="Federated private wavelet density estimation experiments")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name, help=f"run the {name} experiment")
        s.add_argument("--config", help="flat JSON config file")
        s.add_argument("--seed", type=_seed, help="override the config seed")
        s.add_argument("--out", default="fdpwave-out", help="output directory")
        s.add_argument("--threads", type=int, help="worker threads (speed only); falls back to FDP_THREADS")
    sub.add_parser("list-defaults", help="print every config key with its default and provenance")
    return p


def _load(args) -> config.ExperimentConfig:
    cfg = config.load(args.config) if args.config else config.ExperimentConfig()
    changes = {"kind": args.command}
    if args.seed is not None:
        changes["seed"] = args.seed
    return cfg.replace(**changes)


def _manifest(cfg: config.ExperimentConfig, files: list[str], wall: float, threads: int, status: str) -> dict:
    return {
        "command": cfg.kind,
        "config": cfg.to_json(),
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "threads": threads,
        "status": status,
        "files": sorted(os.path.basename(f) for f in files),
        "wall_seconds": wall,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "versions": {
            "fdpwave": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "kernel_backend": kernels.BACKEND,
        },
    }


def print_defaults(stream=None) -> None:
    stream = stream or sys.stdout
    rows = config.list_defaults()
    width = max(len(k) for k, _, _ in rows)
    for key, value, note in rows:
        stream.write(f"{key:<{width}}  {json.dumps(value):<28}  {note}\n")


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list-defaults":
        print_defaults()
        return 0
    try:
        threads = _threads(args.threads)
        cfg = _load(args)
        os.makedirs(args.out, exist_ok=True)
    except ValidationError as exc:
        print(f"fdpwave: validation error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"fdpwave: cannot create output directory: {exc}", file=sys.stderr)
        return 3
    start = time.perf_counter()
    status = "ok"
    try:
        if cfg.kind == "verify":
            files, ok = experiments.run_verify(cfg, args.out, threads)
            _print_verify(os.path.join(args.out, "verify.csv"))
            if not ok:
                status = "verification failed"
        else:
            files = experiments.RUNNERS[cfg.kind](cfg, args.out, threads)
    except ValidationError as exc:
        print(f"fdpwave: validation error: {exc}", file=sys.stderr)
        return 2
    except (ComputationError, ArithmeticError, MemoryError, RuntimeError) as exc:
        print(f"fdpwave: runtime error: {exc}", file=sys.stderr)
        return 3
    wall = time.perf_counter() - start
    files.append(experiments.write_json(os.path.join(args.out, "manifest.json"),
                                        _manifest(cfg, files, wall, threads, status)))
    if status != "ok":
        print(f"fdpwave: {status}", file=sys.stderr)
        return 3
    for f in files:
        print(f)
    return 0


def _print_verify(path: str) -> None:
    import csv

    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        verdict = "PASS" if r["passed"] == "true" else "FAIL"
        print(f"{verdict}  {r['check']:<18}  {r['detail']}")


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":  # pragma: no cover
    main()
