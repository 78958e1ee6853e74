"""Command line entry point: ``run``, ``verify`` and ``list-experiments``.

Exit status is 0 on success, 1 for invalid configs or inputs (and failed
verification), 2 when a computation breaks down numerically.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .experiments import (
    ConfigError,
    NumericalError,
    list_experiments,
    load_config,
    packaged_baselines,
    packaged_config,
    run_experiment,
    verify,
)

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dynaprice", description="Dynamic pricing experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment from a config file")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="path to an experiment config")
    src.add_argument("experiment", nargs="?", help="name of a packaged experiment")
    r.add_argument("--out", type=Path, help="output directory (default $DYNAPRICE_OUT/<name>)")
    r.add_argument("--seed-override", type=int, help="replace the config seed")
    r.add_argument("--jobs", type=int, help="worker processes for scenario fan-out")

    v = sub.add_parser("verify", help="compare a run directory with baselines")
    v.add_argument("run_dir", type=Path)
    v.add_argument("--baseline", type=Path, help="baseline directory (default: packaged published tables)")
    v.add_argument("--tolerances", type=Path, help="JSON file with per-table tolerance overrides")

    sub.add_parser("list-experiments", help="list packaged experiment configs")
    return p


def _run(args) -> int:
    path = args.config if args.config else packaged_config(args.experiment)
    cfg = load_config(path)
    if args.seed_override is not None:
        cfg = replace(cfg, seed=args.seed_override)
    if args.jobs is not None:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        cfg = replace(cfg, jobs=args.jobs)
    out = run_experiment(cfg, args.out)
    print(f"wrote {out}")
    return EXIT_OK


def _verify(args) -> int:
    tol = None
    if args.tolerances:
        try:
            tol = json.loads(args.tolerances.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"{args.tolerances}: {e}") from None
    report = verify(args.baseline or packaged_baselines(), args.run_dir, tol)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.ok else EXIT_INVALID


def main(argv: list[str] | None = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as e:
        # usage errors are invalid input, not numerical failures
        return EXIT_OK if e.code in (0, None) else EXIT_INVALID
    try:
        if args.command == "run":
            return _run(args)
        if args.command == "verify":
            return _verify(args)
        for name, kind in list_experiments():
            print(f"{name}\t{kind}")
        return EXIT_OK
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
