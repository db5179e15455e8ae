#!/usr/bin/env python3
"""
fracdual command line: run a named experiment from a JSON config.

    fracdual --list
    fracdual run config.json [--seed N] [--out DIR] [--validate] [--log-level LEVEL]

Exit status is 0 when every embedded check passes, 1 when a check fails and
2 on configuration or runtime errors.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

from .config import ExperimentConfig, Settings, load_config
from .config_validator import validate_before_run
from .exceptions import ConfigError, FracDualError
from .experiments import REGISTRY
from .recorder import ExperimentRecorder, run_with_recording

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracdual", description="Duality solutions of (-Delta)^s u = mu")
    parser.add_argument("--list", action="store_true", help="list the available experiments and exit")
    sub = parser.add_subparsers(dest="command")

    run_parser = sub.add_parser("run", help="run the experiment named in a JSON config")
    run_parser.add_argument("config", help="path to the experiment config (JSON)")
    run_parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    run_parser.add_argument("--out", default=None, help="output directory (overrides the config)")
    run_parser.add_argument("--validate", action="store_true", help="validate the config and exit")
    run_parser.add_argument("--log-level", default=None, help="logging level (default from FRACDUAL_LOG_LEVEL)")
    return parser


def list_experiments() -> None:
    print("📊 Available experiments")
    print("=" * 60)
    for name, description in REGISTRY.describe():
        print(f"  {name:<22} {description}")


def run(config: ExperimentConfig, output_dir: str) -> int:
    """Run one experiment, write its outputs and map the outcome to an exit status"""
    definition = REGISTRY.get(config.experiment)
    recorder = ExperimentRecorder(
        output_dir, config.experiment, config.dim, config.order, config_echo=config.echo()
    )
    try:
        report = run_with_recording(recorder, lambda rec: definition.runner(config, rec))
    except FracDualError as e:
        logger.error("experiment %s failed: %s", config.experiment, e)
        return EXIT_ERROR

    if report["passed"]:
        print("✅ All checks passed")
        return EXIT_OK
    print(f"❌ First failing check: {report['first_failure']}")
    return EXIT_CHECK_FAILED


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    settings = Settings.from_env()
    args = _build_parser().parse_args(argv)

    level = (getattr(args, "log_level", None) or settings.log_level).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format="%(levelname)s %(name)s: %(message)s")

    if args.list:
        list_experiments()
        return EXIT_OK
    if args.command != "run":
        _build_parser().print_help()
        return EXIT_ERROR

    try:
        config = load_config(args.config).with_overrides(seed=args.seed, output=args.out)
    except ConfigError as e:
        print(f"❌ Invalid config: {e}")
        return EXIT_ERROR

    if not validate_before_run(config, verbose=True):
        print("❌ Validation failed. Please fix errors before running.")
        return EXIT_ERROR
    if args.validate:
        print("✅ Config is valid")
        return EXIT_OK

    output_dir = config.output or os.path.join(settings.output_dir, config.experiment)
    print(f"🚀 Running {config.experiment} (N={config.dim}, s={config.order:g}, seed={config.seed})")
    return run(config, output_dir)


if __name__ == "__main__":
    sys.exit(main())
