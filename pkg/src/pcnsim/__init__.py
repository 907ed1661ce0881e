"""pcnsim: deterministic simulator for deadline-aware payment channel networks.

Library layout:
  topology   channel graphs, generators, widest-path routing
  workload   Poisson transaction streams with per-size deadlines
  engine     discrete-event core (channels, locks, queues, acks)
  dpcn       deadline-aware sender: dynamic splits, EDF queues, path windows
  baselines  Spider-style fixed-MTU sender and Waterfilling balance probing
  metrics    success ratio / success volume / latency, CSV serialization
  config     run configuration schema and builders
  cli        pcnsim command-line entry point
"""

from .baselines import SpiderParams, WaterfillingParams
from .config import RunConfig, build_graph, build_settings, build_workload, load_config
from .dpcn import DpcnParams
from .engine import RouterConfig, RunSettings, run
from .metrics import Filter, MetricsLog, latency_stats, success_ratio, success_volume
from .topology import (Graph, Path, assign_capacities, generate_barabasi_albert,
                       generate_watts_strogatz, k_widest_disjoint_paths, load_topology,
                       save_topology)
from .workload import TxSpec, WorkloadConfig, generate, mixed_deadline_sample

__version__ = "0.1.0"

__all__ = [
    "DpcnParams", "Filter", "Graph", "MetricsLog", "Path", "RouterConfig", "RunConfig",
    "RunSettings", "SpiderParams", "TxSpec", "WaterfillingParams", "WorkloadConfig",
    "assign_capacities", "build_graph", "build_settings", "build_workload",
    "generate", "generate_barabasi_albert", "generate_watts_strogatz",
    "k_widest_disjoint_paths", "latency_stats", "load_config", "load_topology",
    "mixed_deadline_sample", "run", "save_topology", "success_ratio", "success_volume",
]
