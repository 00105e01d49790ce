"""
Simulator Module.

Euler-Maruyama integration of JLSS dynamics under a given scenario.
System and models consume the same Brownian increments and jump times,
which makes their outputs comparable path by path.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.systems.jlss import JlssModel
from src.systems.scenarios import Scenario
from src.utils.errors import DimensionError, SimulationError


# =============================================================================
# Results
# =============================================================================

@dataclass(eq=False)
class Trajectory:
    """Output path on a time grid, with an optional discrete mode label."""
    grid: np.ndarray
    values: np.ndarray
    mode: Optional[np.ndarray] = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.shape[0] != self.grid.shape[0]:
            raise DimensionError(
                f"{self.values.shape[0]} output samples for {self.grid.shape[0]} grid points"
            )
        if self.mode is not None:
            self.mode = np.asarray(self.mode)
            if self.mode.shape[0] != self.grid.shape[0]:
                raise DimensionError(
                    f"{self.mode.shape[0]} mode labels for {self.grid.shape[0]} grid points"
                )

    @property
    def output_dim(self) -> int:
        return self.values.shape[1]

    def to_frame(self, prefix: str = "y") -> pd.DataFrame:
        """Tabular form with a time column, one column per output and the mode."""
        frame = pd.DataFrame(self.values, columns=[f"{prefix}{j}" for j in range(self.output_dim)])
        frame.insert(0, "t", self.grid)
        if self.mode is not None:
            frame[f"{prefix}_mode"] = self.mode
        return frame


@dataclass(eq=False)
class BasisTrajectories:
    """State transition matrices Xi_t, column i started from the i-th unit vector."""
    grid: np.ndarray
    xi: np.ndarray

    def outputs(self, C: np.ndarray, init_map: np.ndarray, x0: np.ndarray) -> np.ndarray:
        """C Xi_t L x0 at every grid point, shape (K+1, p)."""
        state0 = init_map @ np.asarray(x0, dtype=float)
        return np.einsum("pi,kij,j->kp", C, self.xi, state0)

    def output_maps(self, C: np.ndarray) -> np.ndarray:
        """C Xi_t at every grid point, shape (K+1, p, n)."""
        return np.einsum("pi,kij->kpj", C, self.xi)


# =============================================================================
# Integration
# =============================================================================

def _step_operators(model: JlssModel, scenario: Scenario) -> np.ndarray:
    """Stack of I + A dt_k + F dB_k for every grid step."""
    n = model.state_dim
    dt = scenario.steps
    dB = scenario.brownian_increments
    return (np.eye(n)[None, :, :]
            + model.A[None, :, :] * dt[:, None, None]
            + model.F[None, :, :] * dB[:, None, None])


def _propagate(model: JlssModel, scenario: Scenario, initial: np.ndarray) -> np.ndarray:
    """
    Propagate a block of initial states through the scenario.

    The reset I + R is applied right after the step that lands on a jump time.

    Returns:
        Array of shape (K+1, n, m) for an (n, m) initial block
    """
    operators = _step_operators(model, scenario)
    jumps = scenario.jump_mask()
    reset = np.eye(model.state_dim) + model.R

    states = np.empty((scenario.grid.size,) + initial.shape)
    state = initial
    states[0] = state
    for k in range(operators.shape[0]):
        state = operators[k] @ state
        if jumps[k]:
            state = reset @ state
        states[k + 1] = state

    if not np.all(np.isfinite(states[-1])):
        raise SimulationError(
            f"non-finite state while simulating {model.name}", seed=scenario.seed
        )
    return states


def _check_dimensions(model: JlssModel, scenario: Scenario) -> None:
    if model.source_dim != scenario.x0.size:
        raise DimensionError(
            f"{model.name}: init_map expects x0 of size {model.source_dim}, "
            f"scenario has {scenario.x0.size}"
        )


def jump_counts(scenario: Scenario) -> np.ndarray:
    """Resets applied up to each grid point, the discrete mode of the run."""
    return np.concatenate([[0], np.cumsum(scenario.jump_mask())]).astype(np.int64)


def simulate(model: JlssModel, scenario: Scenario) -> Trajectory:
    """
    Simulate the model output along one scenario.

    The mode label of every grid point is the number of resets applied so
    far. System and model share the scenario's jump times, so their labels
    agree.

    Args:
        model: System or reduced model
        scenario: Input realization and the reference system's x0

    Returns:
        Output trajectory on the scenario grid, with mode labels

    Raises:
        DimensionError: If init_map does not accept the scenario's x0
        SimulationError: If the state becomes non-finite
    """
    _check_dimensions(model, scenario)
    initial = (model.init_map @ scenario.x0)[:, None]
    states = _propagate(model, scenario, initial)[:, :, 0]
    return Trajectory(grid=scenario.grid, values=states @ model.C.T, mode=jump_counts(scenario))


def simulate_basis(model: JlssModel, scenario: Scenario) -> BasisTrajectories:
    """
    Propagate every canonical unit vector through the scenario at once.

    Raises:
        SimulationError: If the state becomes non-finite
    """
    states = _propagate(model, scenario, np.eye(model.state_dim))
    return BasisTrajectories(grid=scenario.grid, xi=states)


# =============================================================================
# Batches
# =============================================================================

def _apply(args):
    function, item = args
    return function(item)


def parallel_map(function: Callable[[Any], Any], items: Sequence[Any], workers: int = 1) -> List[Any]:
    """
    Map a picklable function over items, in item order.

    Uses a process pool when ``workers > 1``; results never depend on the
    order in which workers finish.
    """
    if workers <= 1 or len(items) <= 1:
        return [function(item) for item in items]
    chunksize = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(_apply, [(function, item) for item in items], chunksize=chunksize))


@dataclass(frozen=True)
class PairSimulation:
    """Simulate a system and a model on the same scenario."""
    system: JlssModel
    model: JlssModel

    def __call__(self, scenario: Scenario):
        return simulate(self.system, scenario), simulate(self.model, scenario)


@dataclass(frozen=True)
class DesignSimulation:
    """System output plus model basis trajectories on the same scenario."""
    system: JlssModel
    model: JlssModel

    def __call__(self, scenario: Scenario):
        return simulate(self.system, scenario), simulate_basis(self.model, scenario)


def simulate_pairs(system: JlssModel, model: JlssModel, scenarios: Sequence[Scenario],
                   workers: int = 1) -> List[tuple]:
    """(system output, model output) for every scenario."""
    return parallel_map(PairSimulation(system, model), scenarios, workers)


def simulate_design_data(system: JlssModel, model: JlssModel, scenarios: Sequence[Scenario],
                         workers: int = 1) -> List[tuple]:
    """(system output, model basis) for every scenario."""
    return parallel_map(DesignSimulation(system, model), scenarios, workers)
