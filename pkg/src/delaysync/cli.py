"""Command-line entry point.

Exit codes: 0 success, 2 usage error or unknown experiment, 3 I/O failure,
4 invalid configuration or override.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from .errors import ConfigError, InputError
from .experiments import DEFAULT_ITERATIONS, EXPERIMENTS, ExperimentSpec, run_experiment

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_CONFIG = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="delaysync",
        description="Run a synchronization or fusion experiment and write CSV artifacts.",
    )
    parser.add_argument("experiment", help="one of: " + ", ".join(EXPERIMENTS))
    parser.add_argument("--config", type=Path, help="YAML or JSON parameter file")
    parser.add_argument("--seed", type=int, help="base RNG seed (wins over the config file)")
    parser.add_argument(
        "--iterations", type=int,
        help="anchors per point for sync experiments, scene draws for fusion_bench "
        f"(defaults: {DEFAULT_ITERATIONS['sweep_nsigma']} and {DEFAULT_ITERATIONS['fusion_bench']})",
    )
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override a parameter; VALUE is parsed as YAML (repeatable)",
    )
    parser.add_argument("--plot", action="store_true", help="also render PNG figures")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def parse_overrides(items) -> dict:
    out = {}
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        try:
            out[key.strip()] = yaml.safe_load(raw) if raw.strip() else None
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse value of {key!r}: {exc}") from exc
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.experiment not in EXPERIMENTS:
        parser.print_usage(sys.stderr)
        print(f"delaysync: unknown experiment {args.experiment!r}", file=sys.stderr)
        return EXIT_USAGE
    try:
        spec = ExperimentSpec(
            experiment=args.experiment,
            iterations=args.iterations,
            seed=args.seed,
            output_dir=args.out,
            overrides=parse_overrides(args.overrides),
            config_path=args.config,
            plot=args.plot,
        )
        result = run_experiment(spec)
    except (ConfigError, InputError) as exc:
        print(f"delaysync: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"delaysync: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for path in result.files:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
