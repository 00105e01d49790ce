"""
Trajectory Distance Module.

Distances D(yS, yM) between a system output and a model output: the grid
supremum of a pointwise metric, or the directional Hausdorff distance from
the system path to the model path. The hybrid point metric is infinite
whenever the two paths are in different modes.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Iterable, List, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from src.systems.jlss import JlssModel
from src.systems.scenarios import ScenarioSampler, derive_seed
from src.systems.simulator import Trajectory, parallel_map, simulate
from src.utils.errors import DimensionError, ParameterError


INFINITE_DISTANCE = math.inf

# Rows of the pairwise distance table evaluated at once
HAUSDORFF_CHUNK = 2048


class DistanceKind(str, Enum):
    SUP = "sup"
    DIRECTIONAL_HAUSDORFF = "directional_hausdorff"


class PointMetric(str, Enum):
    EUCLIDEAN = "euclidean"
    HYBRID_EUCLIDEAN = "hybrid_euclidean"


@dataclass(frozen=True)
class DistanceSpec:
    """Which trajectory distance to use."""
    kind: DistanceKind = DistanceKind.SUP
    point_metric: PointMetric = PointMetric.EUCLIDEAN

    def __post_init__(self):
        object.__setattr__(self, "kind", DistanceKind(self.kind))
        object.__setattr__(self, "point_metric", PointMetric(self.point_metric))

    @property
    def is_hybrid(self) -> bool:
        return self.point_metric is PointMetric.HYBRID_EUCLIDEAN

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "point_metric": self.point_metric.value}


# =============================================================================
# Distances
# =============================================================================

def _check_modes(spec: DistanceSpec, yS: Trajectory, yM: Trajectory) -> None:
    if spec.is_hybrid and (yS.mode is None or yM.mode is None):
        raise ParameterError("hybrid_euclidean requires mode labels on both trajectories")


def _sup_distance(spec: DistanceSpec, yS: Trajectory, yM: Trajectory) -> float:
    if yS.grid.shape != yM.grid.shape or not np.array_equal(yS.grid, yM.grid):
        raise DimensionError("sup distance requires identical time grids")
    if spec.is_hybrid and np.any(yS.mode != yM.mode):
        return INFINITE_DISTANCE
    pointwise = np.linalg.norm(yS.values - yM.values, axis=1)
    return float(np.max(pointwise))


def _directional_hausdorff(spec: DistanceSpec, yS: Trajectory, yM: Trajectory) -> float:
    worst = 0.0
    for start in range(0, yS.grid.size, HAUSDORFF_CHUNK):
        stop = start + HAUSDORFF_CHUNK
        table = cdist(yS.values[start:stop], yM.values)
        if spec.is_hybrid:
            mismatch = yS.mode[start:stop, None] != yM.mode[None, :]
            table = np.where(mismatch, INFINITE_DISTANCE, table)
        worst = max(worst, float(np.max(np.min(table, axis=1))))
        if worst == INFINITE_DISTANCE:
            break
    return worst


def distance(spec: DistanceSpec, yS: Trajectory, yM: Trajectory) -> float:
    """
    Distance between a system output and a model output.

    Args:
        spec: Distance kind and point metric
        yS: System output trajectory
        yM: Model output trajectory

    Returns:
        Non-negative distance; ``INFINITE_DISTANCE`` when the hybrid metric
        never finds a matching mode

    Raises:
        DimensionError: If the sup distance gets different grids or the
            outputs have different dimensions
        ParameterError: If the hybrid metric is missing mode labels
    """
    if yS.output_dim != yM.output_dim:
        raise DimensionError(f"output dimensions differ: {yS.output_dim} vs {yM.output_dim}")
    _check_modes(spec, yS, yM)
    if spec.kind is DistanceKind.SUP:
        return _sup_distance(spec, yS, yM)
    return _directional_hausdorff(spec, yS, yM)


def squared_distances(spec: DistanceSpec, pairs: Iterable[Tuple[Trajectory, Trajectory]]) -> np.ndarray:
    """D^2 for every (system, model) trajectory pair."""
    return np.array([distance(spec, yS, yM) ** 2 for yS, yM in pairs], dtype=float)


def distances(spec: DistanceSpec, pairs: Iterable[Tuple[Trajectory, Trajectory]]) -> np.ndarray:
    """D for every (system, model) trajectory pair."""
    values: List[float] = [distance(spec, yS, yM) for yS, yM in pairs]
    return np.array(values, dtype=float)


# =============================================================================
# Scenario batches
# =============================================================================

@dataclass(frozen=True)
class ScenarioDistance:
    """Sample a scenario from a seed, simulate system and model, return (x0, D^2)."""
    system: JlssModel
    model: JlssModel
    sampler: ScenarioSampler
    spec: DistanceSpec

    def __call__(self, seed: int) -> Tuple[np.ndarray, float]:
        scenario = self.sampler.sample(seed)
        value = distance(self.spec, simulate(self.system, scenario), simulate(self.model, scenario))
        return scenario.x0, value ** 2


def sample_squared_distances(
    system: JlssModel,
    model: JlssModel,
    sampler: ScenarioSampler,
    root: int,
    count: int,
    spec: DistanceSpec = DistanceSpec(),
    workers: int = 1,
    stream: int = 0,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Initial states and squared distances of scenarios 0..count-1 of a stream.

    Trajectories are discarded as soon as their distance is known.

    Returns:
        (x0s of shape (count, n), squared distances of shape (count,))
    """
    seeds = [derive_seed(root, stream, i) for i in range(count)]
    results = parallel_map(ScenarioDistance(system, model, sampler, spec), seeds, workers)
    x0s = np.vstack([x0 for x0, _ in results]) if results else np.empty((0, system.state_dim))
    return x0s, np.array([d2 for _, d2 in results], dtype=float)
