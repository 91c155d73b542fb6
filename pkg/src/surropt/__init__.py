"""Surrogate-assisted particle swarm optimization for traffic signal timing.

Subpackages map to the moving parts: ``traffic`` (queue microsimulator and
objective), ``swarm`` (the PSO variants), ``surrogate`` (from-scratch MLP),
``energy`` (per-component RAPL/fallback profiling), ``harness`` (experiments
and CSV artifacts) and ``cli`` (the ``surropt`` command).
"""

from .energy import ComponentTag, Profiler, get_backend
from .surrogate import SurrogateModel, TrainConfig, mape, r_squared
from .swarm import PsoConfig, RunResult, Variant, run
from .traffic import (Evaluator, GridSpec, TrafficMetrics, TrafficScenario,
                      build_scenario, combined_fitness, phase_ratio, simulate)

__version__ = "0.1.0"

__all__ = [
    "ComponentTag", "Profiler", "get_backend",
    "SurrogateModel", "TrainConfig", "mape", "r_squared",
    "PsoConfig", "RunResult", "Variant", "run",
    "Evaluator", "GridSpec", "TrafficMetrics", "TrafficScenario",
    "build_scenario", "combined_fitness", "phase_ratio", "simulate",
    "__version__",
]
