"""Deterministic packet-level simulator for SDN-controlled multicast
video streaming, ALM unicast baselines, and MDC QoE evaluation."""

from .scenario import Scenario, parse_config, load_config  # noqa: F401
from .engine import run  # noqa: F401
from .harness import run_experiment, sweep_and_report  # noqa: F401

__version__ = "0.1.0"
