"""
Scenario Sampling Module.

A scenario is one realization of the initial state together with the
stochastic input (scalar Brownian path and Poisson jump times) on a time
grid refined to contain every jump. Seeds for scenario batches are derived
from a single root seed so that batches can be generated in any order.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.utils.errors import DimensionError, ParameterError
from src.utils.validators import as_vector, as_matrix, is_psd


# Validation scenarios live in the seed domain root ^ VALIDATION_SEED_TAG
VALIDATION_SEED_TAG = 0x5CE7A110D


# =============================================================================
# Initial state distributions
# =============================================================================

class X0Kind(str, Enum):
    """Supported initial-state distributions."""
    GAUSSIAN = "gaussian"
    POINT = "point"


@dataclass(frozen=True, eq=False)
class X0Distribution:
    """Gaussian or deterministic initial state."""
    kind: X0Kind
    mean: np.ndarray
    covariance: Optional[np.ndarray] = None

    def __post_init__(self):
        kind = X0Kind(self.kind)
        mean = as_vector(self.mean, "x0 mean")
        covariance = None
        if kind is X0Kind.GAUSSIAN:
            if self.covariance is None:
                raise ParameterError("gaussian x0 requires a covariance")
            covariance = as_matrix(self.covariance, "x0 covariance", (mean.size, mean.size))
            if not is_psd(covariance):
                raise ParameterError("x0 covariance must be symmetric positive semidefinite")
            covariance = 0.5 * (covariance + covariance.T)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", covariance)

    @classmethod
    def gaussian(cls, mean: Sequence[float], covariance: Any) -> "X0Distribution":
        return cls(X0Kind.GAUSSIAN, np.asarray(mean, dtype=float), np.asarray(covariance, dtype=float))

    @classmethod
    def standard_normal(cls, dim: int) -> "X0Distribution":
        return cls.gaussian(np.zeros(dim), np.eye(dim))

    @classmethod
    def point(cls, x0: Sequence[float]) -> "X0Distribution":
        return cls(X0Kind.POINT, np.asarray(x0, dtype=float))

    @property
    def dim(self) -> int:
        return self.mean.size

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        if self.kind is X0Kind.POINT:
            return self.mean.copy()
        return rng.multivariate_normal(self.mean, self.covariance, method="eigh")

    def second_moment(self) -> np.ndarray:
        """E[x0 x0']."""
        outer = np.outer(self.mean, self.mean)
        if self.kind is X0Kind.POINT:
            return outer
        return self.covariance + outer

    def augmented_moment(self) -> np.ndarray:
        """E[[x0; 1][x0; 1]']."""
        n = self.dim
        moment = np.empty((n + 1, n + 1))
        moment[:n, :n] = self.second_moment()
        moment[:n, n] = self.mean
        moment[n, :n] = self.mean
        moment[n, n] = 1.0
        return moment

    def to_dict(self) -> Dict[str, Any]:
        data = {"kind": self.kind.value, "mean": self.mean.tolist()}
        if self.covariance is not None:
            data["covariance"] = self.covariance.tolist()
        return data


# =============================================================================
# Scenario
# =============================================================================

@dataclass(eq=False)
class Scenario:
    """One realization of (x0, Brownian increments, jump times)."""
    x0: np.ndarray
    grid: np.ndarray
    brownian_increments: np.ndarray
    jump_times: np.ndarray
    seed: int

    def __post_init__(self):
        if self.brownian_increments.shape[0] != self.grid.shape[0] - 1:
            raise DimensionError(
                f"{self.grid.shape[0] - 1} grid steps but "
                f"{self.brownian_increments.shape[0]} Brownian increments"
            )

    @property
    def horizon(self) -> float:
        return float(self.grid[-1])

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.grid)

    def jump_mask(self) -> np.ndarray:
        """Boolean per step: True when the step ends exactly at a jump time."""
        return np.isin(self.grid[1:], self.jump_times)

    def with_x0(self, x0: np.ndarray) -> "Scenario":
        """Same input realization, different initial state."""
        return Scenario(np.asarray(x0, dtype=float), self.grid, self.brownian_increments,
                        self.jump_times, self.seed)


def uniform_grid(horizon: float, max_step: float) -> np.ndarray:
    """Uniform grid on [0, horizon] with step <= max_step."""
    count = max(1, int(math.ceil(horizon / max_step - 1e-9)))
    return np.linspace(0.0, horizon, count + 1)


def sample_jump_times(rng: np.random.Generator, nu: float, horizon: float) -> np.ndarray:
    """Poisson arrival times on (0, horizon] from exponential inter-arrivals."""
    if nu == 0.0:
        return np.empty(0)
    times: List[float] = []
    t = rng.exponential(1.0 / nu)
    while t <= horizon:
        times.append(t)
        t += rng.exponential(1.0 / nu)
    return np.asarray(times, dtype=float)


def sample_scenario(
    x0_dist: X0Distribution,
    horizon: float,
    nu: float,
    max_step: float,
    seed: int,
) -> Scenario:
    """
    Draw one scenario.

    Draw order from the seeded generator is x0, jump times, Brownian
    increments, so a seed reproduces the scenario bit for bit.

    Args:
        x0_dist: Initial-state distribution
        horizon: Final time T > 0
        nu: Jump rate >= 0
        max_step: Largest grid step before jump refinement
        seed: Non-negative integer seed

    Returns:
        Scenario on the jump-refined grid

    Raises:
        ParameterError: On non-positive horizon or step, or a negative rate
    """
    if not horizon > 0:
        raise ParameterError(f"horizon must be positive, got {horizon}")
    if not max_step > 0:
        raise ParameterError(f"max_step must be positive, got {max_step}")
    if not nu >= 0:
        raise ParameterError(f"jump rate must be >= 0, got {nu}")

    rng = np.random.default_rng(seed)
    x0 = x0_dist.sample(rng)
    jump_times = sample_jump_times(rng, nu, horizon)
    grid = np.union1d(uniform_grid(horizon, max_step), jump_times)
    increments = rng.standard_normal(grid.size - 1) * np.sqrt(np.diff(grid))
    return Scenario(x0=x0, grid=grid, brownian_increments=increments,
                    jump_times=jump_times, seed=int(seed))


# =============================================================================
# Seeds
# =============================================================================

def derive_seed(root: int, *path: int) -> int:
    """
    Deterministic child seed for the scenario addressed by ``path``.

    Args:
        root: Experiment root seed
        path: Index path (e.g. stream id, scenario index)

    Returns:
        A 64-bit non-negative integer seed
    """
    sequence = np.random.SeedSequence(entropy=int(root), spawn_key=tuple(int(p) for p in path))
    low, high = sequence.generate_state(2, dtype=np.uint32)
    return (int(high) << 32) | int(low)


def validation_root(root: int) -> int:
    """Root seed of the validation domain paired with a training root."""
    return int(root) ^ VALIDATION_SEED_TAG


@dataclass(frozen=True)
class ScenarioSampler:
    """Sampling settings shared by every scenario of an experiment."""
    x0_dist: X0Distribution
    horizon: float
    nu: float
    max_step: float

    def sample(self, seed: int) -> Scenario:
        return sample_scenario(self.x0_dist, self.horizon, self.nu, self.max_step, seed)

    def batch(self, root: int, count: int, stream: int = 0) -> List[Scenario]:
        """Scenarios ``0..count-1`` of the given stream under ``root``."""
        return [self.sample(derive_seed(root, stream, i)) for i in range(count)]

    def with_x0(self, x0_dist: X0Distribution) -> "ScenarioSampler":
        return ScenarioSampler(x0_dist, self.horizon, self.nu, self.max_step)
