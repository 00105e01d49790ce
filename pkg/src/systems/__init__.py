"""
Systems Package.

JLSS models, scenario sampling and the Euler-Maruyama simulator.
"""

from .jlss import (
    JlssModel,
    Reduction,
    ReductionKind,
    build_reduced_model,
    benchmark_system,
    benchmark_models,
)
from .scenarios import (
    X0Kind,
    X0Distribution,
    Scenario,
    ScenarioSampler,
    sample_scenario,
    derive_seed,
    validation_root,
)
from .simulator import (
    Trajectory,
    BasisTrajectories,
    simulate,
    simulate_basis,
    simulate_pairs,
    simulate_design_data,
    parallel_map,
)

__all__ = [
    "JlssModel",
    "Reduction",
    "ReductionKind",
    "build_reduced_model",
    "benchmark_system",
    "benchmark_models",
    "X0Kind",
    "X0Distribution",
    "Scenario",
    "ScenarioSampler",
    "sample_scenario",
    "derive_seed",
    "validation_root",
    "Trajectory",
    "BasisTrajectories",
    "simulate",
    "simulate_basis",
    "simulate_pairs",
    "simulate_design_data",
    "parallel_map",
]
