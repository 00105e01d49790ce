"""
Experiment Schemas Module.

Pydantic models for experiment configuration documents. Matrices are
row-major nested lists of floats.
"""

from enum import Enum
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.metrics.distance import DistanceKind, DistanceSpec, PointMetric
from src.optimization.accuracy import AccuracyKind
from src.optimization.scenario_opt import RemovalRule
from src.systems.jlss import (
    BENCHMARK_HORIZON,
    JlssModel,
    Reduction,
    benchmark_system,
    build_reduced_model,
)
from src.systems.scenarios import X0Distribution
from src.utils.errors import ParameterError
from src.utils.validators import validate_matrix_field


Matrix = List[List[float]]

# Default integration step as a fraction of the horizon
DEFAULT_STEP_FRACTION = 1e-3


# =============================================================================
# Enums
# =============================================================================

class InitMapMode(str, Enum):
    DEFAULT = "default"
    OPTIMIZE = "optimize"


class X0Source(str, Enum):
    STANDARD_NORMAL = "standard_normal"
    GAUSSIAN = "gaussian"
    POINT = "point"


class Workflow(str, Enum):
    ASSESS = "assess"
    DESIGN = "design"


def rule_for_alpha(alpha: float) -> RemovalRule:
    """Removal rule used for the benchmark table at a given alpha."""
    if alpha <= 0.10 + 1e-12:
        return RemovalRule.GREEDY
    if alpha <= 0.15 + 1e-12:
        return RemovalRule.RANDOM
    return RemovalRule.BLOCK


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


# =============================================================================
# System and models
# =============================================================================

class SystemConfig(_Section):
    """Reference JLSS: the benchmark, or explicit matrices."""
    benchmark: bool = Field(True, description="Use the six-state benchmark system")
    A: Optional[Matrix] = Field(None, description="Drift matrix")
    F: Optional[Matrix] = Field(None, description="Diffusion matrix")
    R: Optional[Matrix] = Field(None, description="Jump reset matrix")
    C: Optional[Matrix] = Field(None, description="Output matrix")
    nu: Optional[float] = Field(None, ge=0, description="Poisson jump rate")
    horizon: float = Field(BENCHMARK_HORIZON, gt=0, description="Time horizon T")
    max_step: Optional[float] = Field(None, gt=0, description="Largest Euler step (default 1e-3 T)")

    @field_validator("A", "F", "R", "C", mode="before")
    @classmethod
    def validate_matrix(cls, v: Any) -> Any:
        return None if v is None else validate_matrix_field(v)

    @model_validator(mode="after")
    def check_source(self) -> "SystemConfig":
        explicit = [self.A, self.F, self.R, self.C, self.nu]
        if not self.benchmark and any(part is None for part in explicit):
            raise ValueError("a non-benchmark system needs A, F, R, C and nu")
        if self.benchmark and any(part is not None for part in explicit):
            raise ValueError("benchmark system matrices cannot be overridden; set benchmark=false")
        return self

    @property
    def step(self) -> float:
        return self.max_step if self.max_step is not None else DEFAULT_STEP_FRACTION * self.horizon

    def build(self) -> JlssModel:
        if self.benchmark:
            return benchmark_system()
        return JlssModel(A=self.A, F=self.F, R=self.R, C=self.C, nu=self.nu, name="S")


class ModelConfig(_Section):
    """Abstracted model: a reduction of the system, or explicit matrices."""
    name: str = Field(..., min_length=1, description="Model label used in reports")
    reduction: Optional[str] = Field(None, description="truncate(k), no_diffusion or no_jump")
    A: Optional[Matrix] = None
    F: Optional[Matrix] = None
    R: Optional[Matrix] = None
    C: Optional[Matrix] = None
    init_map: Union[InitMapMode, Matrix] = Field(
        InitMapMode.DEFAULT, description="'default', 'optimize' or an explicit matrix L"
    )

    @field_validator("A", "F", "R", "C", mode="before")
    @classmethod
    def validate_matrix(cls, v: Any) -> Any:
        return None if v is None else validate_matrix_field(v)

    @field_validator("reduction")
    @classmethod
    def validate_reduction(cls, v: Optional[str]) -> Optional[str]:
        if v is None:
            return v
        try:
            return str(Reduction.parse(v))
        except ParameterError as e:
            raise ValueError(e.message) from None

    @model_validator(mode="after")
    def check_source(self) -> "ModelConfig":
        explicit = [self.A, self.F, self.R, self.C]
        if self.reduction is None and any(part is None for part in explicit):
            raise ValueError(f"model '{self.name}' needs a reduction or A, F, R and C")
        if self.reduction is not None and any(part is not None for part in explicit):
            raise ValueError(f"model '{self.name}' cannot combine a reduction with explicit matrices")
        return self

    @property
    def optimize_map(self) -> bool:
        return self.init_map == InitMapMode.OPTIMIZE

    def build(self, system: JlssModel) -> JlssModel:
        if self.reduction is not None:
            model = build_reduced_model(system, self.reduction, name=self.name)
        else:
            model = JlssModel(A=self.A, F=self.F, R=self.R, C=self.C, nu=system.nu, name=self.name)
        if isinstance(self.init_map, list):
            model = model.with_init_map(np.asarray(self.init_map, dtype=float))
        return model


class X0Config(_Section):
    """Initial-state distribution."""
    kind: X0Source = Field(X0Source.STANDARD_NORMAL, description="standard_normal, gaussian or point")
    mean: Optional[List[float]] = None
    covariance: Optional[Matrix] = None

    @model_validator(mode="after")
    def check_fields(self) -> "X0Config":
        if self.kind is X0Source.GAUSSIAN and (self.mean is None or self.covariance is None):
            raise ValueError("gaussian x0 needs mean and covariance")
        if self.kind is X0Source.POINT and self.mean is None:
            raise ValueError("point x0 needs mean")
        return self

    def build(self, dim: int) -> X0Distribution:
        if self.kind is X0Source.STANDARD_NORMAL:
            return X0Distribution.standard_normal(dim)
        if self.kind is X0Source.POINT:
            return X0Distribution.point(self.mean)
        return X0Distribution.gaussian(self.mean, self.covariance)


class MetricConfig(_Section):
    kind: DistanceKind = DistanceKind.SUP
    point_metric: PointMetric = PointMetric.EUCLIDEAN

    def build(self) -> DistanceSpec:
        return DistanceSpec(self.kind, self.point_metric)


# =============================================================================
# Bounds and optimization
# =============================================================================

class BoundConfig(_Section):
    """Violation level, confidence and the empirical violation levels to run."""
    eps: float = Field(0.25, gt=0, lt=1, description="Violation level epsilon")
    beta: float = Field(1e-10, gt=0, lt=1, description="Confidence parameter beta")
    alphas: List[float] = Field(default_factory=lambda: [0.10], min_length=1,
                                description="Empirical violation levels")
    r: Optional[int] = Field(None, ge=1, description="Override of the decision-variable count")

    @model_validator(mode="after")
    def check_alpha_below_eps(self) -> "BoundConfig":
        for alpha in self.alphas:
            if not 0.0 <= alpha < self.eps:
                raise ValueError(
                    f"invariant 0 <= alpha < eps violated: alpha={alpha}, eps={self.eps}"
                )
        return self


class BasisConfig(_Section):
    """Gaussian bumps centred on samples of the x0 distribution."""
    n_centers: int = Field(8, ge=1)
    width: float = Field(1.0, gt=0, description="Common bump width")


class TwoStepConfig(_Section):
    alpha1: float = Field(0.10, ge=0, lt=1)
    alpha2: float = Field(0.22, ge=0, lt=1)

    @model_validator(mode="after")
    def check_order(self) -> "TwoStepConfig":
        if self.alpha1 > self.alpha2:
            raise ValueError(f"invariant alpha1 <= alpha2 violated: {self.alpha1} > {self.alpha2}")
        return self


class OptimizationConfig(_Section):
    workflow: Workflow = Workflow.ASSESS
    accuracy: AccuracyKind = AccuracyKind.QUADRATIC_PER_MODE
    removal_rule: Optional[RemovalRule] = Field(
        None, description="Fixed rule; by default chosen from alpha as in the benchmark table"
    )
    n_scenarios: Optional[int] = Field(None, ge=1, description="Override of the bound-derived N")
    basis: Optional[BasisConfig] = None
    two_step: Optional[TwoStepConfig] = None
    tolerances: Dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_basis(self) -> "OptimizationConfig":
        if self.accuracy is AccuracyKind.BASIS_EXPANSION and self.basis is None:
            raise ValueError("basis_expansion accuracy needs a basis section")
        if self.workflow is Workflow.DESIGN and self.accuracy is AccuracyKind.BASIS_EXPANSION:
            raise ValueError("map design supports scalar and quadratic_per_mode accuracy")
        return self

    def rule(self, alpha: float) -> RemovalRule:
        return self.removal_rule or rule_for_alpha(alpha)


# =============================================================================
# Validation, seeds and output
# =============================================================================

class HistogramConfig(_Section):
    n_x0: int = Field(1000, ge=1)
    n_w: int = Field(4500, ge=1)
    bins: int = Field(50, ge=1)


class ValidationConfig(_Section):
    m: int = Field(10000, ge=1, description="Fresh scenarios for eps_hat")
    confidence: float = Field(0.99, gt=0, lt=1)
    histogram: Optional[HistogramConfig] = None


class SeedConfig(_Section):
    root: int = Field(0, ge=0, description="Root seed of the experiment")


class OutputConfig(_Section):
    directory: Optional[str] = Field(None, description="Output directory (default from environment)")
    include_timings: bool = Field(True, description="Emit wall-clock timings in reports")


class ExperimentConfig(_Section):
    """A complete experiment."""
    name: str = Field("experiment", min_length=1)
    system: SystemConfig = Field(default_factory=SystemConfig)
    models: List[ModelConfig] = Field(..., min_length=1)
    x0: X0Config = Field(default_factory=X0Config)
    metric: MetricConfig = Field(default_factory=MetricConfig)
    bounds: BoundConfig = Field(default_factory=BoundConfig)
    optimization: OptimizationConfig = Field(default_factory=OptimizationConfig)
    validation: ValidationConfig = Field(default_factory=ValidationConfig)
    seeds: SeedConfig = Field(default_factory=SeedConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "name": "table1_m1",
                "models": [{"name": "M1", "reduction": "truncate(4)"}],
                "bounds": {"eps": 0.25, "beta": 1e-10, "alphas": [0.10]},
                "seeds": {"root": 2024},
            }
        },
    )

    @model_validator(mode="after")
    def check_models(self) -> "ExperimentConfig":
        names = [m.name for m in self.models]
        if len(set(names)) != len(names):
            raise ValueError(f"model names must be unique, got {names}")
        if self.optimization.workflow is Workflow.DESIGN and not any(m.optimize_map for m in self.models):
            raise ValueError("the design workflow needs at least one model with init_map 'optimize'")
        two_step = self.optimization.two_step
        if two_step is not None and two_step.alpha2 >= self.bounds.eps:
            raise ValueError(
                f"invariant alpha2 < eps violated: alpha2={two_step.alpha2}, eps={self.bounds.eps}"
            )
        return self
