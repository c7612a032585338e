"""Command line entry point: ``driftflow <experiment> [options]``.

Exit status: 0 when every check passes, 2 when a threshold check fails,
1 on any execution error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from driftflow.experiments import EXPERIMENTS, ExperimentConfig, run_experiment
from driftflow.expr import ExpressionError

EXIT_OK, EXIT_ERROR, EXIT_THRESHOLD = 0, 1, 2

# flag name -> (config field, type)
_OPTIONS = {
    "L": ("L", int),
    "noise-std": ("noise_std", float),
    "y-hat": ("y_hat", float),
    "ess-floor": ("ess_floor", float),
    "c": ("c", float),
    "rbf-count": ("rbf_count", int),
    "max-iters": ("max_iters", int),
    "seed": ("seed", int),
    "prior-mean": ("prior_mean", float),
    "prior-std": ("prior_std", float),
    "expr": ("expr", str),
    "out": ("output_dir", Path),
}


def read_config_file(path: Path) -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    lookup = {}
    for flag, (name, kind) in _OPTIONS.items():
        lookup[flag] = lookup[flag.replace("-", "_")] = lookup[name] = (name, kind)
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or key not in lookup:
            raise ValueError(f"{path}:{lineno}: cannot parse {raw.strip()!r}")
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        name, kind = lookup[key]
        values[name] = kind(value)
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftflow",
        description="Progressive particle-flow Bayes updates with oracle checks.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", type=Path, help="key = value file; flags take precedence")
        for flag, (dest, kind) in _OPTIONS.items():
            p.add_argument(f"--{flag}", dest=dest, type=kind, default=None)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def make_config(args: argparse.Namespace) -> ExperimentConfig:
    values = read_config_file(args.config) if args.config else {}
    for dest, _ in _OPTIONS.values():
        flag_value = getattr(args, dest)
        if flag_value is not None:
            values[dest] = flag_value
    return ExperimentConfig(experiment=args.experiment, **values)


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; 2 is reserved for threshold failures
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = make_config(args)
        result = run_experiment(config)
    except ExpressionError as exc:
        print(f"error: expression: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    for key, value in result.metrics.items():
        print(f"{key:32s} {value}")
    for key, ok in result.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {key}")
    print(f"outputs written to {config.output_dir}")
    return EXIT_OK if result.passed else EXIT_THRESHOLD


if __name__ == "__main__":
    sys.exit(main())
