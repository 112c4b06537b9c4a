"""Scenario configs, the batch runner, result auditing and the CLI."""

from .config import ConfigError, ScenarioConfig, load_config
from .reference import build_reference_topology
from .runner import ScenarioResult, run_batch
