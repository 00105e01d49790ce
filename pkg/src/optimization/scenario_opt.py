"""
Scenario Optimization Module.

Constraint removal over sampled scenario constraints and the concrete
scenario problems built on it:

- scalar accuracy assessment (closed-form order statistic),
- quadratic per-mode accuracy assessment,
- Gaussian-bump accuracy assessment,
- joint design of the initialization map and the accuracy function,
- the two-step design that re-assesses the designed map at a larger
  empirical violation on fresh scenarios.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
from loguru import logger

from src.metrics.distance import DistanceSpec, sample_squared_distances
from src.optimization.accuracy import (
    DEFAULT_MODE,
    AccuracyKind,
    AccuracyModel,
    GaussianBasis,
    MomentData,
    accuracy_parameter_count,
    design_parameter_count,
)
from src.optimization.bounds import BoundParams, min_N_implicit, removal_count
from src.optimization.convex_core import (
    ConvexProgram,
    RowData,
    ScalarBlock,
    Solution,
    SolverTolerances,
    quadratic_form_coefficients,
    solve,
)
from src.systems.jlss import JlssModel
from src.systems.scenarios import Scenario, ScenarioSampler, X0Distribution
from src.systems.simulator import BasisTrajectories, Trajectory, simulate_design_data
from src.utils.errors import DimensionError, ParameterError, StallError


# Ids of structural rows (never removed)
STRUCTURAL_ID_BASE = -1000


class RemovalRule(str, Enum):
    GREEDY = "greedy"
    RANDOM = "random"
    BLOCK = "block"


# =============================================================================
# Results
# =============================================================================

@dataclass
class SolutionMeta:
    """Provenance of a scenario solution."""
    alpha: float
    n_scenarios: int
    removal_rule: str
    eps: Optional[float] = None
    beta: Optional[float] = None
    root_seed: Optional[int] = None
    n_parameters: Optional[int] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def removal_target(self) -> int:
        return removal_count(self.alpha, self.n_scenarios)


@dataclass(eq=False)
class ScenarioSolution:
    """Optimized accuracy (and map), removed constraints and objective."""
    accuracy: AccuracyModel
    removed: Tuple[int, ...]
    objective: float
    meta: SolutionMeta
    design_params: Optional[np.ndarray] = None
    objective_history: List[float] = field(default_factory=list)

    @property
    def training_violation_rate(self) -> float:
        return len(self.removed) / self.meta.n_scenarios

    def to_dict(self) -> Dict[str, Any]:
        return {
            "accuracy": self.accuracy.to_dict(),
            "design_params": None if self.design_params is None else self.design_params.tolist(),
            "removed": list(self.removed),
            "objective": self.objective,
            "objective_history": list(self.objective_history),
            "meta": asdict(self.meta),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ScenarioSolution":
        design = data.get("design_params")
        return cls(
            accuracy=AccuracyModel.from_dict(data["accuracy"]),
            removed=tuple(int(i) for i in data["removed"]),
            objective=float(data["objective"]),
            meta=SolutionMeta(**data["meta"]),
            design_params=None if design is None else np.asarray(design, dtype=float),
            objective_history=[float(v) for v in data.get("objective_history", [])],
        )


Decoder = Callable[[Dict[str, np.ndarray]], Tuple[AccuracyModel, Optional[np.ndarray]]]


@dataclass
class ScenarioProblem:
    """A convex program whose scenario constraints carry ids 0..N-1."""
    program: ConvexProgram
    n_scenarios: int
    decode: Decoder
    n_parameters: int


# =============================================================================
# Constraint removal
# =============================================================================

def _violated(solution: Solution) -> Set[int]:
    ids, slacks = solution.constraint_ids, solution.slack_values
    return set(ids[(ids >= 0) & (slacks < 0.0)].tolist())


def _active(solution: Solution, tol: SolverTolerances) -> List[int]:
    """Ids of satisfied rows whose slack is within the solver's resolution of zero."""
    ids, slacks, rel = solution.constraint_ids, solution.slack_values, solution.relative_slacks
    tight = (rel <= tol.active) | (slacks <= solution.duality_gap)
    mask = (ids >= 0) & (slacks >= 0.0) & tight
    return sorted(ids[mask].tolist())


def _assemble(problem: ScenarioProblem, solution: Solution, violated: Set[int],
              meta: SolutionMeta, history: List[float]) -> ScenarioSolution:
    accuracy, design = problem.decode(solution.values)
    return ScenarioSolution(
        accuracy=accuracy,
        removed=tuple(sorted(violated)),
        objective=solution.objective,
        meta=meta,
        design_params=design,
        objective_history=list(history),
    )


def remove_constraints(
    problem: ScenarioProblem,
    alpha: float,
    rule: Union[RemovalRule, str] = RemovalRule.GREEDY,
    seed: Optional[int] = None,
    tolerances: Optional[SolverTolerances] = None,
    workers: int = 1,
    eps: Optional[float] = None,
    beta: Optional[float] = None,
    root_seed: Optional[int] = None,
) -> ScenarioSolution:
    """
    Remove floor(alpha N) scenario constraints, one removal step at a time.

    Each step excludes the currently violated set plus the chosen active
    constraint(s), re-solves, and recomputes the violated set.

    Args:
        problem: Scenario problem with constraint ids 0..N-1
        alpha: Empirical violation level
        rule: ``greedy`` (best improvement, lowest id on ties), ``random``
            (one active constraint at random) or ``block`` (all active
            constraints, a random subset for the last partial block)
        seed: Seed of the random choices
        tolerances: Solver tolerances
        workers: Threads evaluating greedy candidates
        eps, beta, root_seed: Provenance recorded in the solution metadata

    Returns:
        ScenarioSolution whose removed set has exactly floor(alpha N) ids

    Raises:
        StallError: When no removal can make progress (carries the partial solution)
        SolverError: When an inner solve fails
    """
    rule = RemovalRule(rule)
    tol = tolerances or SolverTolerances()
    n = problem.n_scenarios
    target = removal_count(alpha, n)
    rng = np.random.default_rng(seed)
    meta = SolutionMeta(alpha=alpha, n_scenarios=n, removal_rule=rule.value, eps=eps, beta=beta,
                        root_seed=root_seed, n_parameters=problem.n_parameters)

    current = solve(problem.program, tol).raise_for_status()
    violated = _violated(current)
    history = [current.objective]
    futile: Set[int] = set()
    logger.debug(f"{problem.program.name}: removing {target} of {n} constraints ({rule.value})")

    def stall(reason: str) -> StallError:
        partial = _assemble(problem, current, violated, meta, history)
        return StallError(f"constraint removal stalled with {len(violated)}/{target} removed: {reason}",
                          partial=partial, removed=len(violated), target=target)

    max_steps = 4 * (n + 1)
    steps = 0
    while len(violated) < target:
        steps += 1
        if steps > max_steps:
            raise stall("step limit reached")
        active = [i for i in _active(current, tol) if i not in violated]

        if rule is RemovalRule.GREEDY:
            if not active:
                raise stall("no active constraint")
            threshold = 10.0 * (tol.opt_abs + tol.opt * abs(current.objective))

            def attempt(cid: int) -> Solution:
                return solve(problem.program, tol, exclude=violated | {cid}, start=current).raise_for_status()

            if workers > 1 and len(active) > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    candidates = list(pool.map(attempt, active))
            else:
                candidates = [attempt(cid) for cid in active]
            best_id, best = None, None
            for cid, candidate in zip(active, candidates):
                if candidate.objective >= current.objective - threshold:
                    continue
                if best is None or candidate.objective < best.objective - threshold:
                    best_id, best = cid, candidate
            if best is None:
                raise stall("no active constraint improves the objective")
            chosen, current = [best_id], best

        elif rule is RemovalRule.RANDOM:
            pool_ids = [i for i in active if i not in futile]
            if not pool_ids:
                raise stall("every active constraint was tried without progress")
            chosen = [pool_ids[int(rng.integers(len(pool_ids)))]]
            current = solve(problem.program, tol, exclude=violated | set(chosen), start=current).raise_for_status()

        else:
            pool_ids = [i for i in active if i not in futile]
            if not pool_ids:
                raise stall("every active constraint was tried without progress")
            remaining = target - len(violated)
            if len(pool_ids) <= remaining:
                chosen = pool_ids
            else:
                chosen = sorted(rng.choice(pool_ids, size=remaining, replace=False).tolist())
            current = solve(problem.program, tol, exclude=violated | set(chosen), start=current).raise_for_status()

        updated = _violated(current)
        if updated == violated:
            futile.update(chosen)
        else:
            futile.clear()
        violated = updated
        history.append(current.objective)

    logger.debug(f"{problem.program.name}: objective {history[0]:.6g} -> {history[-1]:.6g} in {steps} steps")
    return _assemble(problem, current, violated, meta, history)


# =============================================================================
# Scalar accuracy
# =============================================================================

def _checked_squared(distances: Sequence[float], finite: bool = True) -> np.ndarray:
    values = np.asarray(distances, dtype=float).reshape(-1)
    if values.size == 0:
        raise ParameterError("at least one scenario distance is required")
    if np.any(values < 0) or np.any(np.isnan(values)):
        raise ParameterError("distances must be non-negative")
    if finite and not np.all(np.isfinite(values)):
        raise ParameterError("infinite distances cannot enter a convex scenario program")
    return values ** 2


def assess_scalar(distances: Sequence[float], alpha: float, **provenance: Any) -> ScenarioSolution:
    """
    Smallest constant accuracy violated by exactly floor(alpha N) scenarios.

    The result is the (k+1)-th largest squared distance, ties broken by the
    lowest scenario index.

    Raises:
        ParameterError: On empty or negative input
    """
    squared = _checked_squared(distances, finite=False)
    n = squared.size
    k = removal_count(alpha, n)
    if k >= n:
        raise ParameterError(f"cannot remove {k} of {n} constraints")
    order = np.argsort(-squared, kind="stable")
    h = float(squared[order[k]])
    if k and squared[order[k - 1]] == h:
        logger.warning("tied squared distances at the removal boundary")
    meta = SolutionMeta(alpha=alpha, n_scenarios=n, removal_rule="order_statistic",
                        n_parameters=1, **provenance)
    return ScenarioSolution(
        accuracy=AccuracyModel.scalar(h),
        removed=tuple(sorted(order[:k].tolist())),
        objective=h,
        meta=meta,
        objective_history=[float(squared.max()), h] if k else [h],
    )


def scalar_problem(distances: Sequence[float]) -> ScenarioProblem:
    """LP form of the scalar assessment: minimize h s.t. h >= D_i^2."""
    squared = _checked_squared(distances)
    n = squared.size
    program = ConvexProgram("scalar_assessment")
    program.add_vector_variable("h", 1)
    program.set_objective({"h": [1.0]})
    program.add_rows(np.arange(n), np.ones((n, 1)), -squared)
    decode = lambda values: (AccuracyModel.scalar(max(0.0, float(values["h"][0]))), None)  # noqa: E731
    return ScenarioProblem(program, n, decode, 1)


# =============================================================================
# Quadratic accuracy
# =============================================================================

def _x0_matrix(scenarios: Union[Sequence[Scenario], np.ndarray]) -> np.ndarray:
    if isinstance(scenarios, np.ndarray):
        return np.atleast_2d(scenarios.astype(float))
    return np.vstack([np.asarray(s.x0, dtype=float) for s in scenarios])


def _mode_labels(modes: Optional[Sequence[int]], count: int, moments: MomentData) -> np.ndarray:
    labels = np.full(count, DEFAULT_MODE) if modes is None else np.asarray(modes, dtype=int)
    if labels.shape[0] != count:
        raise DimensionError(f"{labels.shape[0]} mode labels for {count} scenarios")
    missing = set(labels.tolist()) - set(moments.modes)
    if missing:
        raise ParameterError(f"scenario mode(s) {sorted(missing)} absent from the moment data")
    return labels


def _theta_name(mode: int) -> str:
    return f"theta_{mode}"


def _declare_thetas(program: ConvexProgram, moments: MomentData) -> None:
    for mode in moments.modes:
        program.add_matrix_variable(_theta_name(mode), moments.state_dim + 1, psd=True)


def _theta_objective(moments: MomentData) -> Dict[str, np.ndarray]:
    return {_theta_name(mode): moments.weighted(mode) for mode in moments.modes}


def _theta_affine(program: ConvexProgram, x0s: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Rows of [x0; 1]' Theta_k [x0; 1] in the flat decision space."""
    augmented = np.hstack([x0s, np.ones((x0s.shape[0], 1))])
    coeffs = quadratic_form_coefficients(augmented)
    affine = np.zeros((x0s.shape[0], program.n_scalars))
    for mode in np.unique(labels).tolist():
        var = program.variable(_theta_name(mode))
        rows = labels == mode
        affine[np.ix_(rows, np.arange(var.offset, var.offset + var.length))] = coeffs[rows]
    return affine


def _decode_thetas(values: Dict[str, np.ndarray], moments: MomentData) -> AccuracyModel:
    return AccuracyModel.quadratic({mode: values[_theta_name(mode)] for mode in moments.modes})


def quadratic_problem(x0s: np.ndarray, distances: Sequence[float], moments: MomentData,
                      modes: Optional[Sequence[int]] = None) -> ScenarioProblem:
    """minimize sum_k P(k) tr(Theta_k M_k) s.t. D_i^2 <= [x0_i; 1]' Theta_k(i) [x0_i; 1]."""
    squared = _checked_squared(distances)
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    if x0s.shape != (squared.size, moments.state_dim):
        raise DimensionError(f"x0 stack {x0s.shape} does not match {squared.size} scenarios "
                             f"of dimension {moments.state_dim}")
    labels = _mode_labels(modes, squared.size, moments)

    program = ConvexProgram("quadratic_assessment")
    _declare_thetas(program, moments)
    program.set_objective(_theta_objective(moments))
    program.add_rows(np.arange(squared.size), _theta_affine(program, x0s, labels), -squared)
    decode = lambda values: (_decode_thetas(values, moments), None)  # noqa: E731
    r = accuracy_parameter_count(AccuracyKind.QUADRATIC_PER_MODE, moments.state_dim, len(moments.modes))
    return ScenarioProblem(program, squared.size, decode, r)


def assess_quadratic(
    scenarios: Union[Sequence[Scenario], np.ndarray],
    distances: Sequence[float],
    alpha: float,
    moments: MomentData,
    modes: Optional[Sequence[int]] = None,
    rule: Union[RemovalRule, str] = RemovalRule.GREEDY,
    seed: Optional[int] = None,
    tolerances: Optional[SolverTolerances] = None,
    workers: int = 1,
    **provenance: Any,
) -> ScenarioSolution:
    """
    Quadratic per-mode accuracy assessment.

    Args:
        scenarios: Scenarios (or their x0 stack) paired with ``distances``
        distances: Trajectory distance of every scenario
        alpha: Empirical violation level
        moments: Augmented second moments of x0 per mode
        modes: Mode of every scenario's x0 (single mode when omitted)
        rule, seed, tolerances, workers: Passed to remove_constraints

    Raises:
        ParameterError: If a scenario mode has no moment data
    """
    problem = quadratic_problem(_x0_matrix(scenarios), distances, moments, modes)
    return remove_constraints(problem, alpha, rule, seed, tolerances, workers, **provenance)


# =============================================================================
# Gaussian bump accuracy
# =============================================================================

def basis_problem(x0s: np.ndarray, distances: Sequence[float], basis: GaussianBasis,
                  x0_dist: X0Distribution) -> ScenarioProblem:
    """minimize sum_i w_i E[bump_i] s.t. D_j^2 <= sum_i w_i bump_i(x0_j), w >= 0."""
    squared = _checked_squared(distances)
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    q = basis.size
    program = ConvexProgram("basis_assessment")
    program.add_vector_variable("w", q)
    program.set_objective({"w": basis.expectations(x0_dist)})
    program.add_rows(np.arange(squared.size), basis.evaluate(x0s), -squared)
    program.add_rows(STRUCTURAL_ID_BASE - np.arange(q), np.eye(q), np.zeros(q))
    decode = lambda values: (AccuracyModel.basis_expansion(values["w"], basis), None)  # noqa: E731
    return ScenarioProblem(program, squared.size, decode, q)


def assess_basis(
    scenarios: Union[Sequence[Scenario], np.ndarray],
    distances: Sequence[float],
    alpha: float,
    basis: GaussianBasis,
    x0_dist: X0Distribution,
    rule: Union[RemovalRule, str] = RemovalRule.GREEDY,
    seed: Optional[int] = None,
    tolerances: Optional[SolverTolerances] = None,
    workers: int = 1,
    **provenance: Any,
) -> ScenarioSolution:
    """Gaussian-bump accuracy assessment with non-negative weights."""
    problem = basis_problem(_x0_matrix(scenarios), distances, basis, x0_dist)
    return remove_constraints(problem, alpha, rule, seed, tolerances, workers, **provenance)


# =============================================================================
# Initialization map design
# =============================================================================

class TrackingRows(ScalarBlock):
    """
    Rows ||y_t - G_t L x0||^2 <= a'z + b, one per (scenario, grid point).

    ``G_t`` is the model output map C Xi_t at the grid point and ``L`` is
    the flattened initialization-map variable. All rows of a scenario share
    that scenario's constraint id and affine right-hand side.
    """

    def __init__(self, maps: np.ndarray, targets: np.ndarray, groups: np.ndarray,
                 x0s: np.ndarray, map_slice: slice, map_shape: Tuple[int, int],
                 affine_a: np.ndarray, affine_b: np.ndarray):
        self.maps = maps
        self.targets = targets
        self.groups = np.asarray(groups, dtype=np.int64)
        self.x0s = x0s
        self.map_slice = map_slice
        self.map_shape = map_shape
        self.affine_a = affine_a
        self.affine_b = affine_b

    @property
    def ids(self) -> np.ndarray:
        return self.groups

    def evaluate(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        L = z[self.map_slice].reshape(self.map_shape)
        states = self.x0s @ L.T
        predicted = np.einsum("rpj,rj->rp", self.maps, states[self.groups])
        residual = self.targets - predicted
        quad = np.einsum("rp,rp->r", residual, residual)
        affine = (self.affine_a @ z + self.affine_b)[self.groups]
        return affine - quad, 1.0 + np.maximum(np.abs(affine), quad)

    def rows(self, index: np.ndarray) -> RowData:
        groups = self.groups[index]
        count, p = index.size, self.targets.shape[1]
        P = np.zeros((count, p, self.affine_a.shape[1]))
        P[:, :, self.map_slice] = -np.einsum(
            "rpj,rk->rpjk", self.maps[index], self.x0s[groups]
        ).reshape(count, p, -1)
        return RowData(a=self.affine_a[groups], b=self.affine_b[groups], P=P, q=self.targets[index])


def design_problem(
    system_outputs: Sequence[Trajectory],
    bases: Sequence[BasisTrajectories],
    x0s: np.ndarray,
    output_matrix: np.ndarray,
    accuracy_kind: Union[AccuracyKind, str] = AccuracyKind.SCALAR,
    moments: Optional[MomentData] = None,
) -> ScenarioProblem:
    """Joint program over (accuracy, L) with one tracking row per grid point."""
    kind = AccuracyKind(accuracy_kind)
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    n_scen, n = x0s.shape
    if not (len(system_outputs) == len(bases) == n_scen):
        raise DimensionError("system outputs, bases and x0s must share scenario indexing")
    C = np.asarray(output_matrix, dtype=float)
    model_dim = C.shape[1]

    maps, targets, groups = [], [], []
    for i, (yS, basis) in enumerate(zip(system_outputs, bases)):
        if yS.grid.shape != basis.grid.shape or not np.array_equal(yS.grid, basis.grid):
            raise DimensionError(f"scenario {i}: system and basis grids differ")
        if basis.xi.shape[1] != model_dim:
            raise DimensionError(f"scenario {i}: basis dimension {basis.xi.shape[1]} != {model_dim}")
        maps.append(basis.output_maps(C))
        targets.append(yS.values)
        groups.append(np.full(yS.grid.size, i))
    maps_arr = np.concatenate(maps)
    targets_arr = np.concatenate(targets)
    groups_arr = np.concatenate(groups)

    program = ConvexProgram("init_map_design")
    if kind is AccuracyKind.SCALAR:
        program.add_vector_variable("h", 1)
    elif kind is AccuracyKind.QUADRATIC_PER_MODE:
        if moments is None:
            raise ParameterError("quadratic design needs moment data")
        _declare_thetas(program, moments)
    else:
        raise ParameterError("design supports scalar and quadratic_per_mode accuracy")
    L_var = program.add_vector_variable("L", model_dim * n)

    if kind is AccuracyKind.SCALAR:
        program.set_objective({"h": [1.0]})
        affine_a = np.zeros((n_scen, program.n_scalars))
        affine_a[:, program.variable("h").offset] = 1.0
    else:
        program.set_objective(_theta_objective(moments))
        affine_a = _theta_affine(program, x0s, _mode_labels(None, n_scen, moments))

    program.add_block(TrackingRows(maps_arr, targets_arr, groups_arr, x0s, L_var.slice,
                                   (model_dim, n), affine_a, np.zeros(n_scen)))

    def decode(values: Dict[str, np.ndarray]):
        L = values["L"].reshape(model_dim, n)
        if kind is AccuracyKind.SCALAR:
            return AccuracyModel.scalar(max(0.0, float(values["h"][0]))), L
        return _decode_thetas(values, moments), L

    n_modes = 1 if moments is None else len(moments.modes)
    r = design_parameter_count(kind, model_dim, n, n_modes)
    return ScenarioProblem(program, n_scen, decode, r)


def design_init_map(
    system_outputs: Sequence[Trajectory],
    bases: Sequence[BasisTrajectories],
    x0s: np.ndarray,
    alpha: float,
    output_matrix: np.ndarray,
    accuracy_kind: Union[AccuracyKind, str] = AccuracyKind.SCALAR,
    moments: Optional[MomentData] = None,
    rule: Union[RemovalRule, str] = RemovalRule.RANDOM,
    seed: Optional[int] = None,
    tolerances: Optional[SolverTolerances] = None,
    workers: int = 1,
    **provenance: Any,
) -> ScenarioSolution:
    """
    Jointly optimize the accuracy function and the initialization map L.

    Every grid point of every retained scenario contributes the constraint
    ||yS_t - C Xi_t L x0||^2 <= h(x0).

    Args:
        system_outputs: System output per scenario
        bases: Model basis trajectories per scenario
        x0s: System initial state per scenario
        alpha: Empirical violation level
        output_matrix: Model output matrix C
        accuracy_kind: ``scalar`` or ``quadratic_per_mode``
        moments: Moment data for quadratic accuracy

    Raises:
        DimensionError: On grid or indexing mismatch
    """
    problem = design_problem(system_outputs, bases, x0s, output_matrix, accuracy_kind, moments)
    return remove_constraints(problem, alpha, rule, seed, tolerances, workers, **provenance)


def two_step_design(
    system: JlssModel,
    model: JlssModel,
    sampler: ScenarioSampler,
    spec: DistanceSpec,
    alpha1: float,
    alpha2: float,
    eps: float,
    beta: float,
    root_seed: int,
    accuracy_kind: Union[AccuracyKind, str] = AccuracyKind.SCALAR,
    rules: Tuple[str, str] = (RemovalRule.RANDOM.value, RemovalRule.BLOCK.value),
    n_scenarios: Tuple[Optional[int], Optional[int]] = (None, None),
    tolerances: Optional[SolverTolerances] = None,
    workers: int = 1,
) -> ScenarioSolution:
    """
    Design L at alpha1, then re-assess the accuracy alone at alpha2.

    Step one runs design_init_map on stream 0 of ``root_seed``. Step two
    fixes L, draws fresh scenarios from stream 1, sized by the implicit bound
    with only the accuracy parameters counted, and runs the assessment.

    Returns:
        The step-two solution carrying the designed L

    Raises:
        ParameterError: If not alpha1 <= alpha2 < eps
    """
    if not 0.0 <= alpha1 <= alpha2 < eps:
        raise ParameterError(f"two-step design needs 0 <= alpha1 <= alpha2 < eps, got "
                             f"{alpha1}, {alpha2}, {eps}")
    kind = AccuracyKind(accuracy_kind)
    moments = MomentData.from_distribution(sampler.x0_dist) if kind is AccuracyKind.QUADRATIC_PER_MODE else None

    r1 = design_parameter_count(kind, model.state_dim, system.state_dim)
    n1 = n_scenarios[0] or min_N_implicit(BoundParams(eps=eps, beta=beta, alpha=alpha1, r=r1))
    scenarios = sampler.batch(root_seed, n1, stream=0)
    data = simulate_design_data(system, model, scenarios, workers)
    step1 = design_init_map(
        [d[0] for d in data], [d[1] for d in data], _x0_matrix(scenarios), alpha1, model.C,
        kind, moments, rules[0], root_seed, tolerances, workers,
        eps=eps, beta=beta, root_seed=root_seed,
    )
    logger.info(f"two-step design: step one objective {step1.objective:.6g} with N={n1}")

    designed = model.with_init_map(step1.design_params)
    r2 = accuracy_parameter_count(kind, system.state_dim)
    n2 = n_scenarios[1] or min_N_implicit(BoundParams(eps=eps, beta=beta, alpha=alpha2, r=r2))
    fresh_x0s, fresh_squared = sample_squared_distances(system, designed, sampler, root_seed, n2,
                                                        spec, workers, stream=1)
    distances = np.sqrt(fresh_squared)
    if kind is AccuracyKind.SCALAR:
        step2 = assess_scalar(distances, alpha2, eps=eps, beta=beta, root_seed=root_seed)
    else:
        step2 = assess_quadratic(fresh_x0s, distances, alpha2, moments, rule=rules[1], seed=root_seed,
                                 tolerances=tolerances, workers=workers,
                                 eps=eps, beta=beta, root_seed=root_seed)
    step2.design_params = step1.design_params
    step2.meta.extra.update({
        "step1_objective": step1.objective,
        "step1_alpha": alpha1,
        "step1_n_scenarios": n1,
        "step1_removed": len(step1.removed),
    })
    return step2
