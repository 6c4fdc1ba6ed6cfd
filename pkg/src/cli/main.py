"""Command line entry point: run, validate and report."""

import argparse
import asyncio
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from ..utils.errors import ConfigurationError, SimulationError
from ..utils.logger import setup_logging
from .models import ScenarioConfig, validate_document
from .outputs import reaggregate, write_outputs
from .runner import run_scenario
from .scenarios import build_scenario, check_scenario, parse_config

logger = logging.getLogger(__name__)

WORKERS_ENV = "STOCHCHAR_WORKERS"

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stochchar", description="Stochastic characteristics for SPDEs with transport noise."
    )
    parser.add_argument("--log-level", default="INFO", help="console log level (default: INFO)")
    parser.add_argument("--log-dir", type=Path, default=None, help=argparse.SUPPRESS)
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="simulate a scenario and write its outputs")
    run.add_argument("config", type=Path, help="scenario JSON document")
    run.add_argument("--paths", type=int, help="number of Monte Carlo paths")
    run.add_argument("--seed", type=int, help="master seed")
    run.add_argument("--workers", type=int, help=f"concurrent paths (overrides ${WORKERS_ENV})")
    run.add_argument("--fail-fast", action="store_true", default=None, help="abort on the first failed path")
    run.add_argument("--out", type=Path, help="output directory")

    validate = commands.add_parser("validate", help="parse a scenario and check its parabolicity")
    validate.add_argument("config", type=Path, help="scenario JSON document")

    report = commands.add_parser("report", help="re-aggregate an existing output directory")
    report.add_argument("directory", type=Path, help="output directory of a previous run")
    return parser


def _env_workers() -> Optional[int]:
    raw = os.environ.get(WORKERS_ENV)
    if not raw:
        return None
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigurationError(f"{WORKERS_ENV}={raw!r} is not an integer", field_path="monte_carlo.workers")
    if workers < 1:
        raise ConfigurationError(f"{WORKERS_ENV} must be at least 1", field_path="monte_carlo.workers")
    return workers


def _read_config(path: Path) -> ScenarioConfig:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror or exc}")
    return parse_config(text)


def apply_overrides(config: ScenarioConfig, args: argparse.Namespace) -> ScenarioConfig:
    """Flags beat the environment, which beats the document."""
    document = config.model_dump(mode="json")
    monte_carlo = document["monte_carlo"]
    env_workers = _env_workers()
    if env_workers is not None:
        monte_carlo["workers"] = env_workers
    if args.workers is not None:
        monte_carlo["workers"] = args.workers
    if args.paths is not None:
        monte_carlo["paths"] = args.paths
    if args.seed is not None:
        monte_carlo["master_seed"] = args.seed
    if args.fail_fast:
        monte_carlo["fail_fast"] = True
    if args.out is not None:
        document["output"]["directory"] = str(args.out)
    return validate_document(document)


def cmd_run(args: argparse.Namespace) -> int:
    config = apply_overrides(_read_config(args.config), args)
    summary = asyncio.run(run_scenario(config))
    directory = asyncio.run(write_outputs(summary, config.output.directory))
    failed = summary.aggregate["failed"]
    print(f"{summary.aggregate['completed']}/{len(summary.results)} paths completed, {failed} failed -> {directory}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    config = _read_config(args.config)
    report = check_scenario(build_scenario(config))
    print(f"{config.scenario}: nu_hat={report.nu_hat:.12g} M_hat={report.M_hat:.12g} hash={config.config_hash()}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    document = asyncio.run(reaggregate(args.directory))
    print(json.dumps(document, sort_keys=True, indent=2, default=str))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "validate": cmd_validate, "report": cmd_report}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level.upper(), args.log_dir)
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except SimulationError as exc:
        logger.error("%s", exc)
        return EXIT_FAILED
    except KeyboardInterrupt:
        logger.warning("interrupted")
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
