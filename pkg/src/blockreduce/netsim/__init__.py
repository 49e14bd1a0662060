"""Discrete-event network simulator."""

from .attack import AttackReport, run_attack_scenario
from .config import ConfigError, SimConfig, dump_config, from_dict, load_config, validate
from .demand import DemandModel, demand_model
from .groups import break_even_latency_weight, select_group, zone_scores
from .sim import SimMetrics, Simulation, run
from .sweep import SweepResult, SweepRow, bandwidth_sweep, baseline_config
from .topology import Relation, Tier, Topology, propagate_block, propagate_tx

__all__ = [
    "AttackReport", "ConfigError", "DemandModel", "Relation", "SimConfig", "SimMetrics",
    "Simulation", "SweepResult", "SweepRow", "Tier", "Topology", "bandwidth_sweep",
    "baseline_config", "break_even_latency_weight", "demand_model", "dump_config",
    "from_dict", "load_config", "propagate_block", "propagate_tx", "run",
    "run_attack_scenario", "select_group", "validate", "zone_scores",
]
