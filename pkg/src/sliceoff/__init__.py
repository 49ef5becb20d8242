"""Multi-edge slicing + offloading simulator and benchmark harness."""

from .config import (
    ExperimentConfig,
    RegionScenario,
    Scenario,
    TrafficConfig,
    default_experiment_config,
    default_scenario,
    load_experiment_config,
    save_experiment_config,
)
from .core import (
    EconomicParams,
    RadioParams,
    SliceCatalog,
    SliceDecision,
    TaskSpec,
    VmQueue,
)

__version__ = "0.1.0"

__all__ = [
    "EconomicParams",
    "ExperimentConfig",
    "RadioParams",
    "RegionScenario",
    "Scenario",
    "SliceCatalog",
    "SliceDecision",
    "TaskSpec",
    "TrafficConfig",
    "VmQueue",
    "default_experiment_config",
    "default_scenario",
    "load_experiment_config",
    "save_experiment_config",
]
