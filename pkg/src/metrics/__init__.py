"""
Metrics Package.

Distances between system and model output trajectories.
"""

from .distance import (
    INFINITE_DISTANCE,
    DistanceKind,
    PointMetric,
    DistanceSpec,
    distance,
    distances,
    squared_distances,
    ScenarioDistance,
    sample_squared_distances,
)

__all__ = [
    "INFINITE_DISTANCE",
    "DistanceKind",
    "PointMetric",
    "DistanceSpec",
    "distance",
    "distances",
    "squared_distances",
    "ScenarioDistance",
    "sample_squared_distances",
]
