"""Emulated 5G cell with CAPIF-style API discovery, northbound QoS exposure,
and an adaptive video client, plus a deterministic scenario runner."""

from .capif import CapifCore
from .client import AdaptationConfig, ClientPhase, InvokerClient
from .harness import Scenario, ScenarioSpec, emit_csv, run_scenario
from .nef import NefService
from .netmodel import Cell, Flow, NetworkModel, UeContext

__version__ = "0.1.0"

__all__ = [
    "AdaptationConfig",
    "CapifCore",
    "Cell",
    "ClientPhase",
    "Flow",
    "InvokerClient",
    "NefService",
    "NetworkModel",
    "Scenario",
    "ScenarioSpec",
    "UeContext",
    "emit_csv",
    "run_scenario",
    "__version__",
]
