"""Scenario configuration, Monte Carlo orchestration and result files."""

from .models import SCENARIOS, ScenarioConfig, validate_document
from .outputs import load_results, load_snapshot, reaggregate, write_outputs
from .runner import MonteCarloRunner, PathResult, RunSummary, Snapshot, aggregate, run_path, run_scenario
from .scenarios import Scenario, build_scenario, check_scenario, fourier_oracle, parse_config

__all__ = [
    "SCENARIOS",
    "MonteCarloRunner",
    "PathResult",
    "RunSummary",
    "Scenario",
    "ScenarioConfig",
    "Snapshot",
    "aggregate",
    "build_scenario",
    "check_scenario",
    "fourier_oracle",
    "load_results",
    "load_snapshot",
    "parse_config",
    "reaggregate",
    "run_path",
    "run_scenario",
    "validate_document",
    "write_outputs",
]
