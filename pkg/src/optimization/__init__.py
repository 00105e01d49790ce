"""
Optimization Package.

Sample-size bounds, the dense convex solver, accuracy parametrizations and
scenario-based constraint removal.
"""

from .bounds import (
    BoundParams,
    removal_count,
    implicit_condition_holds,
    min_N_implicit,
    min_N_chernoff,
    min_N_vc,
    sample_size_table,
)
from .convex_core import (
    ConvexProgram,
    Solution,
    SolveStatus,
    SolverTolerances,
    solve,
    project_psd,
)
from .accuracy import (
    AccuracyKind,
    AccuracyModel,
    GaussianBasis,
    MomentData,
    accuracy_parameter_count,
    design_parameter_count,
)
from .scenario_opt import (
    RemovalRule,
    ScenarioProblem,
    ScenarioSolution,
    SolutionMeta,
    remove_constraints,
    assess_scalar,
    assess_quadratic,
    assess_basis,
    design_init_map,
    two_step_design,
)

__all__ = [
    "BoundParams",
    "removal_count",
    "implicit_condition_holds",
    "min_N_implicit",
    "min_N_chernoff",
    "min_N_vc",
    "sample_size_table",
    "ConvexProgram",
    "Solution",
    "SolveStatus",
    "SolverTolerances",
    "solve",
    "project_psd",
    "AccuracyKind",
    "AccuracyModel",
    "GaussianBasis",
    "MomentData",
    "accuracy_parameter_count",
    "design_parameter_count",
    "RemovalRule",
    "ScenarioProblem",
    "ScenarioSolution",
    "SolutionMeta",
    "remove_constraints",
    "assess_scalar",
    "assess_quadratic",
    "assess_basis",
    "design_init_map",
    "two_step_design",
]
