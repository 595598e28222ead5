"""Discrete-event simulation of fog (edge + cloud) versus cloud-only deployments."""

from fogsim.engine import Engine, Event, EventKind, Rng
from fogsim.experiment import run_experiment, write_reports
from fogsim.metrics import compare
from fogsim.scenario import ScenarioConfig, load_scenario
from fogsim.topology import Topology, build_topology, path_latency, route

__all__ = [
    "Engine",
    "Event",
    "EventKind",
    "Rng",
    "ScenarioConfig",
    "Topology",
    "build_topology",
    "compare",
    "load_scenario",
    "path_latency",
    "route",
    "run_experiment",
    "write_reports",
]
