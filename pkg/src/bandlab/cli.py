"""Command-line entry point: one subcommand per experiment.

Each subcommand reads an optional flat JSON config (see ``harness.parse_config``)
and accepts overrides for the seed, output directory, worker count, and table
format.  Exit status 0 means success, 1 a runtime or verification failure,
and 2 a usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import BandError, ConfigError
from .harness import EXPERIMENTS, parse_config, run

_DESCRIPTIONS = {
    "verify": "run the exact-identity suite (factorization, pivots, determinants, composition)",
    "decay": "fractional-moment decay of the corner resolvent block over chain lengths",
    "localize": "eigenvector-correlator profiles and localization-length fits",
    "wegner": "tail probabilities of a resolvent block norm over a threshold grid",
    "lyapunov": "Lyapunov spectrum of the chain's transfer cocycle",
    "fluctuate": "distortion and anti-concentration statistics of sweep increments",
    "mregular": "moment and curvature certificates for configured entry laws",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bandlab",
        description="Numerical experiments on random block tridiagonal band matrices.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=_DESCRIPTIONS[name])
        p.add_argument("--config", type=Path, default=None, help="flat JSON config document")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--workers", type=int, default=None, help="override the worker count")
        p.add_argument("--format", default=None, choices=("csv", "json"), help="table format")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    doc = {}
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return 2
        try:
            loaded = json.loads(text)
        except json.JSONDecodeError as exc:
            print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
            return 2
        if not isinstance(loaded, dict):
            print("error: config must be a JSON object of key/value pairs", file=sys.stderr)
            return 2
        doc = loaded

    named = doc.get("experiment")
    if named is not None and named != args.experiment:
        print(
            f"error: config names experiment '{named}' but the subcommand is "
            f"'{args.experiment}'",
            file=sys.stderr,
        )
        return 2
    doc["experiment"] = args.experiment
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.out is not None:
        doc["out"] = args.out
    if args.workers is not None:
        doc["workers"] = args.workers
    if args.format is not None:
        doc["format"] = args.format
    if "seed" not in doc:
        print("error: a seed is required (config key 'seed' or --seed)", file=sys.stderr)
        return 2

    try:
        config = parse_config(json.dumps(doc))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(config)
    except OSError as exc:
        print(f"error: cannot write results: {exc}", file=sys.stderr)
        return 1
    except BandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
