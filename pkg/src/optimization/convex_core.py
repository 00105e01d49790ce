"""
Convex Core Module.

Dense primal barrier solver for the programs built by the scenario
problems and the bi-simulation baseline:

    minimize    c'z
    subject to  G0 + sum_j z_j G_j  is positive semidefinite   (PSD blocks)
                ||P_i z + q_i||^2 <= a_i'z + b_i                 (scalar rows)

Symmetric matrix variables are stored through their upper triangle. Large
row families are handled by an active-set loop that solves on a working set
and adds violated rows until none remain.
"""

import dataclasses
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from src.utils.errors import (
    DimensionError,
    InfeasibleProblemError,
    ParameterError,
    SolverError,
)
from src.utils.validators import is_symmetric


# =============================================================================
# Configuration
# =============================================================================

@dataclass(frozen=True)
class SolverTolerances:
    """Stopping rules of the barrier method and the active-set loop."""
    feas: float = 1e-8
    opt: float = 1e-6
    opt_abs: float = 1e-7
    psd: float = 1e-8
    active: float = 1e-6
    mu: float = 20.0
    newton_tol: float = 1e-9
    stall_decrement: float = 1e-3
    regularization: float = 1e-12
    max_newton: int = 100
    max_outer: int = 80
    max_rounds: int = 60
    working_set_cap: int = 4000
    batch_add: int = 1000

    def with_overrides(self, **overrides: Any) -> "SolverTolerances":
        unknown = set(overrides) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise ParameterError(f"unknown solver tolerance(s): {sorted(unknown)}")
        return dataclasses.replace(self, **overrides)


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITERATIONS = "max-iterations"


# =============================================================================
# Variables
# =============================================================================

@dataclass(frozen=True)
class Variable:
    """A named block of the flat decision vector."""
    name: str
    kind: str
    size: int
    offset: int
    psd: bool = False

    @property
    def length(self) -> int:
        if self.kind == "matrix":
            return self.size * (self.size + 1) // 2
        return self.size

    @property
    def slice(self) -> slice:
        return slice(self.offset, self.offset + self.length)


def _triu(size: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(size)


def symmetric_coefficients(weights: np.ndarray) -> np.ndarray:
    """
    Coefficients c with c . z = <W, X> for a symmetric matrix variable X.

    Accepts one (s, s) weight matrix or a stack of them (N, s, s).
    """
    weights = np.asarray(weights, dtype=float)
    size = weights.shape[-1]
    rows, cols = _triu(size)
    coeffs = weights[..., rows, cols] + weights[..., cols, rows]
    diagonal = rows == cols
    coeffs[..., diagonal] *= 0.5
    return coeffs


def quadratic_form_coefficients(vectors: np.ndarray) -> np.ndarray:
    """
    Coefficients of w' X w in the upper-triangle parameters of X, one row per w.

    Args:
        vectors: Array (N, s)

    Returns:
        Array (N, s(s+1)/2)
    """
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    rows, cols = _triu(vectors.shape[1])
    coeffs = vectors[:, rows] * vectors[:, cols]
    coeffs[:, rows != cols] *= 2.0
    return coeffs


# =============================================================================
# Scalar constraint rows
# =============================================================================

@dataclass
class RowData:
    """Materialized rows ||P z + q||^2 <= a'z + b."""
    a: np.ndarray
    b: np.ndarray
    P: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.b.shape[0]

    def residuals(self, z: np.ndarray) -> Optional[np.ndarray]:
        if self.P is None:
            return None
        return np.einsum("nkm,m->nk", self.P, z) + self.q

    def slacks(self, z: np.ndarray) -> np.ndarray:
        slack = self.a @ z + self.b
        r = self.residuals(z)
        if r is not None:
            slack = slack - np.einsum("nk,nk->n", r, r)
        return slack

    def augmented(self) -> "RowData":
        """Rows with an extra trailing variable added to the affine side."""
        a = np.hstack([self.a, np.ones((len(self), 1))])
        P = None
        if self.P is not None:
            P = np.concatenate([self.P, np.zeros(self.P.shape[:2] + (1,))], axis=2)
        return RowData(a=a, b=self.b, P=P, q=self.q)


class ScalarBlock(ABC):
    """
    A family of scalar rows, each tagged with an integer constraint id.

    Several rows may share an id; a constraint is satisfied when all of its
    rows are. Non-negative ids are scenario constraints that constraint
    removal may drop; negative ids are structural.
    """

    @property
    @abstractmethod
    def ids(self) -> np.ndarray:
        """Constraint id of every row."""

    @abstractmethod
    def evaluate(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Slack and scale (for relative tests) of every row at z."""

    @abstractmethod
    def rows(self, index: np.ndarray) -> RowData:
        """Materialize the selected rows."""

    @property
    def n_rows(self) -> int:
        return self.ids.shape[0]


class QuadraticRows(ScalarBlock):
    """Dense rows given explicitly; P and q may be omitted for linear rows."""

    def __init__(self, ids: Sequence[int], a: np.ndarray, b: np.ndarray,
                 P: Optional[np.ndarray] = None, q: Optional[np.ndarray] = None):
        self._ids = np.asarray(ids, dtype=np.int64)
        self._data = RowData(
            a=np.atleast_2d(np.asarray(a, dtype=float)),
            b=np.asarray(b, dtype=float).reshape(-1),
            P=None if P is None else np.asarray(P, dtype=float),
            q=None if q is None else np.asarray(q, dtype=float),
        )
        if not (self._data.a.shape[0] == self._data.b.shape[0] == self._ids.shape[0]):
            raise DimensionError("row count mismatch between ids, a and b")
        if (P is None) != (q is None):
            raise DimensionError("P and q must be given together")

    @property
    def ids(self) -> np.ndarray:
        return self._ids

    def evaluate(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        affine = self._data.a @ z + self._data.b
        r = self._data.residuals(z)
        quad = 0.0 if r is None else np.einsum("nk,nk->n", r, r)
        scale = 1.0 + np.maximum(np.abs(affine), quad)
        return affine - quad, scale

    def rows(self, index: np.ndarray) -> RowData:
        data = self._data
        return RowData(
            a=data.a[index], b=data.b[index],
            P=None if data.P is None else data.P[index],
            q=None if data.q is None else data.q[index],
        )


@dataclass
class PsdConstraint:
    """Affine matrix expression G0 + sum_j z_j G_j required to be PSD."""
    constraint_id: int
    G0: np.ndarray
    Gs: np.ndarray

    def matrix(self, z: np.ndarray) -> np.ndarray:
        return self.G0 + np.tensordot(z, self.Gs, axes=1)


# =============================================================================
# Program
# =============================================================================

class ConvexProgram:
    """
    Linear objective, PSD blocks and scalar row families over named variables.

    Declare every variable before adding constraints.
    """

    def __init__(self, name: str = "program"):
        self.name = name
        self.variables: Dict[str, Variable] = {}
        self.objective = np.zeros(0)
        self.psd_constraints: List[PsdConstraint] = []
        self.blocks: List[ScalarBlock] = []
        self._n_scalars = 0

    @property
    def n_scalars(self) -> int:
        return self._n_scalars

    def _declare(self, variable: Variable) -> Variable:
        if self.psd_constraints or self.blocks:
            raise ParameterError("variables must be declared before constraints")
        if variable.name in self.variables:
            raise ParameterError(f"variable '{variable.name}' already declared")
        self.variables[variable.name] = variable
        self._n_scalars += variable.length
        self.objective = np.zeros(self._n_scalars)
        return variable

    def add_matrix_variable(self, name: str, size: int, psd: bool = True) -> Variable:
        """Symmetric size x size variable, optionally constrained PSD."""
        return self._declare(Variable(name, "matrix", int(size), self._n_scalars, psd))

    def add_vector_variable(self, name: str, length: int) -> Variable:
        """Free real vector variable."""
        return self._declare(Variable(name, "vector", int(length), self._n_scalars))

    def variable(self, name: str) -> Variable:
        try:
            return self.variables[name]
        except KeyError:
            raise ParameterError(f"undeclared variable '{name}'") from None

    def coefficients(self, name: str, weight: Any) -> np.ndarray:
        """
        Flat coefficient vector of <weight, variable>.

        For a matrix variable ``weight`` is an (s, s) matrix and the functional
        is trace(weight' X); for a vector variable it is a vector.
        """
        var = self.variable(name)
        coeffs = np.zeros(self._n_scalars)
        weight = np.asarray(weight, dtype=float)
        if var.kind == "matrix":
            if weight.shape != (var.size, var.size):
                raise DimensionError(f"weight for '{name}' must be {var.size}x{var.size}")
            coeffs[var.slice] = symmetric_coefficients(weight)
        else:
            weight = weight.reshape(-1)
            if weight.shape[0] != var.size:
                raise DimensionError(f"weight for '{name}' must have length {var.size}")
            coeffs[var.slice] = weight
        return coeffs

    def set_objective(self, terms: Dict[str, Any]) -> None:
        """Objective sum of <weight, variable> over the given terms."""
        objective = np.zeros(self._n_scalars)
        for name, weight in terms.items():
            objective += self.coefficients(name, weight)
        self.objective = objective

    def unpack(self, z: np.ndarray) -> Dict[str, np.ndarray]:
        """Variable values from the flat vector."""
        values = {}
        for name, var in self.variables.items():
            chunk = z[var.slice]
            if var.kind == "matrix":
                rows, cols = _triu(var.size)
                matrix = np.zeros((var.size, var.size))
                matrix[rows, cols] = chunk
                matrix[cols, rows] = chunk
                values[name] = matrix
            else:
                values[name] = chunk.copy()
        return values

    def pack(self, values: Dict[str, Any]) -> np.ndarray:
        """Flat vector from variable values; missing variables are zero."""
        z = np.zeros(self._n_scalars)
        for name, value in values.items():
            var = self.variable(name)
            value = np.asarray(value, dtype=float)
            if var.kind == "matrix":
                z[var.slice] = value[_triu(var.size)]
            else:
                z[var.slice] = value.reshape(-1)
        return z

    def add_psd_constraint(self, expression: Callable[[Dict[str, np.ndarray]], np.ndarray],
                           constraint_id: int) -> None:
        """
        Require an affine matrix expression of the variables to be PSD.

        The expression is sampled at the origin and at every unit vector of
        the flat decision space to recover its affine coefficients.

        Raises:
            ParameterError: If the expression is not symmetric
        """
        m = self._n_scalars
        G0 = np.asarray(expression(self.unpack(np.zeros(m))), dtype=float)
        if not is_symmetric(G0):
            raise ParameterError(f"PSD constraint {constraint_id} is not symmetric")
        Gs = np.empty((m,) + G0.shape)
        unit = np.zeros(m)
        for j in range(m):
            unit[j] = 1.0
            Gs[j] = np.asarray(expression(self.unpack(unit)), dtype=float) - G0
            unit[j] = 0.0
            if not is_symmetric(Gs[j]):
                raise ParameterError(f"PSD constraint {constraint_id} is not symmetric")
        self.psd_constraints.append(PsdConstraint(int(constraint_id), 0.5 * (G0 + G0.T),
                                                  0.5 * (Gs + Gs.transpose(0, 2, 1))))

    def add_block(self, block: ScalarBlock) -> None:
        """Add a family of scalar rows."""
        self.blocks.append(block)

    def add_rows(self, ids: Sequence[int], a: np.ndarray, b: np.ndarray,
                 P: Optional[np.ndarray] = None, q: Optional[np.ndarray] = None) -> None:
        """Add explicit rows ||P z + q||^2 <= a'z + b."""
        self.add_block(QuadraticRows(ids, a, b, P, q))

    def variable_psd_constraints(self) -> List[PsdConstraint]:
        """PSD requirements of matrix variables, with negative ids."""
        constraints = []
        for index, var in enumerate(v for v in self.variables.values() if v.kind == "matrix"):
            if not var.psd:
                continue
            rows, cols = _triu(var.size)
            Gs = np.zeros((self._n_scalars, var.size, var.size))
            for k, (i, j) in enumerate(zip(rows, cols)):
                Gs[var.offset + k, i, j] = 1.0
                Gs[var.offset + k, j, i] = 1.0
            constraints.append(PsdConstraint(-(index + 1), np.zeros((var.size, var.size)), Gs))
        return constraints


# =============================================================================
# Solution
# =============================================================================

@dataclass(eq=False)
class Solution:
    """Result of solve."""
    status: SolveStatus
    values: Dict[str, np.ndarray]
    z: Optional[np.ndarray]
    objective: float
    constraint_ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    slack_values: np.ndarray = field(default_factory=lambda: np.empty(0))
    relative_slacks: np.ndarray = field(default_factory=lambda: np.empty(0))
    iterations: int = 0
    duality_gap: float = float("inf")
    barrier_t: float = 1.0
    working_set: List[np.ndarray] = field(default_factory=list)
    message: str = ""

    @property
    def slacks(self) -> Dict[int, float]:
        """Constraint id to minimum slack over its rows."""
        return dict(zip(self.constraint_ids.tolist(), self.slack_values.tolist()))

    def raise_for_status(self) -> "Solution":
        """Return self when optimal, otherwise raise the matching error."""
        if self.status is SolveStatus.INFEASIBLE:
            raise InfeasibleProblemError(self.message or "problem is infeasible")
        if self.status is SolveStatus.MAX_ITERATIONS:
            raise SolverError(self.message or "iteration limit reached", gap=self.duality_gap)
        return self


# =============================================================================
# Barrier method
# =============================================================================

@dataclass
class _BarrierProblem:
    c: np.ndarray
    rows: List[RowData]
    psds: List[PsdConstraint]

    @property
    def weight(self) -> float:
        return float(sum(len(r) for r in self.rows) + sum(p.G0.shape[0] for p in self.psds))

    def _cholesky(self, z: np.ndarray) -> Optional[List[np.ndarray]]:
        factors = []
        for psd in self.psds:
            try:
                factors.append(np.linalg.cholesky(psd.matrix(z)))
            except np.linalg.LinAlgError:
                return None
        return factors

    def in_domain(self, z: np.ndarray) -> bool:
        if any(np.any(r.slacks(z) <= 0) for r in self.rows):
            return False
        return self._cholesky(z) is not None

    def value(self, t: float, z: np.ndarray) -> float:
        total = t * float(self.c @ z)
        for r in self.rows:
            slack = r.slacks(z)
            if np.any(slack <= 0):
                return np.inf
            total -= float(np.sum(np.log(slack)))
        factors = self._cholesky(z)
        if factors is None:
            return np.inf
        for L in factors:
            total -= 2.0 * float(np.sum(np.log(np.diag(L))))
        return total

    def derivatives(self, t: float, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        m = z.shape[0]
        grad = t * self.c.copy()
        hess = np.zeros((m, m))
        for r in self.rows:
            residual = r.residuals(z)
            slack = r.slacks(z)
            u = r.a if residual is None else r.a - 2.0 * np.einsum("nkm,nk->nm", r.P, residual)
            w = u / slack[:, None]
            grad -= w.sum(axis=0)
            hess += w.T @ w
            if r.P is not None:
                hess += 2.0 * np.einsum("nkm,nkl->ml", r.P / slack[:, None, None], r.P)
        for psd in self.psds:
            inverse = np.linalg.inv(psd.matrix(z))
            B = np.einsum("ab,jbc->jac", inverse, psd.Gs)
            grad -= np.einsum("jaa->j", B)
            hess += np.einsum("jab,kba->jk", B, B)
        return grad, 0.5 * (hess + hess.T)

    def augmented(self) -> "_BarrierProblem":
        """Phase-one problem in (z, s): every constraint relaxed by s, minimize s."""
        c = np.zeros(self.c.shape[0] + 1)
        c[-1] = 1.0
        psds = [
            PsdConstraint(p.constraint_id, p.G0,
                          np.concatenate([p.Gs, np.eye(p.G0.shape[0])[None]], axis=0))
            for p in self.psds
        ]
        return _BarrierProblem(c, [r.augmented() for r in self.rows], psds)

    def max_violation(self, z: np.ndarray) -> float:
        worst = -np.inf
        for r in self.rows:
            if len(r):
                worst = max(worst, float(np.max(-r.slacks(z))))
        for p in self.psds:
            worst = max(worst, float(-np.linalg.eigvalsh(p.matrix(z))[0]))
        return worst


def _newton_direction(grad: np.ndarray, hess: np.ndarray, regularization: float) -> np.ndarray:
    m = grad.shape[0]
    trace = float(np.trace(hess))
    shift = regularization * (trace / max(m, 1) if trace > 0 else 1.0)
    try:
        return -cho_solve(cho_factor(hess + shift * np.eye(m)), grad)
    except (LinAlgError, ValueError):
        return -np.linalg.lstsq(hess + shift * np.eye(m), grad, rcond=None)[0]


def _center(problem: _BarrierProblem, t: float, z: np.ndarray, tol: SolverTolerances,
            stop: Optional[Callable[[np.ndarray], bool]]) -> Tuple[np.ndarray, int, bool, bool]:
    """
    Newton's method on the barrier function for fixed t.

    Returns:
        (z, iterations, stopped, converged). A failed line search counts as
        converged only when the Newton decrement is already below
        ``tol.stall_decrement``.
    """
    decrement = np.inf
    for iteration in range(1, tol.max_newton + 1):
        grad, hess = problem.derivatives(t, z)
        step_dir = _newton_direction(grad, hess, tol.regularization)
        decrement = float(-grad @ step_dir)
        if decrement / 2.0 <= tol.newton_tol:
            return z, iteration, False, True
        current = problem.value(t, z)
        step = 1.0
        slope = float(grad @ step_dir)
        while step > 1e-14:
            candidate = z + step * step_dir
            if problem.value(t, candidate) <= current + 0.25 * step * slope:
                break
            step *= 0.5
        else:
            return z, iteration, False, decrement / 2.0 <= tol.stall_decrement
        z = candidate
        if stop is not None and stop(z):
            return z, iteration, True, True
    return z, tol.max_newton, False, decrement / 2.0 <= tol.stall_decrement


def _minimize(problem: _BarrierProblem, z: np.ndarray, tol: SolverTolerances,
              t0: Optional[float] = None,
              stop: Optional[Callable[[np.ndarray], bool]] = None) -> Tuple[np.ndarray, SolveStatus, int, float, float]:
    """Barrier path following from a strictly feasible z."""
    weight = max(problem.weight, 1.0)
    t = t0 if t0 is not None else weight / max(1.0, abs(float(problem.c @ z)))
    iterations = 0
    for _ in range(tol.max_outer):
        z, steps, stopped, converged = _center(problem, t, z, tol, stop)
        iterations += steps
        objective = float(problem.c @ z)
        if stopped:
            return z, SolveStatus.OPTIMAL, iterations, weight / t, t
        if objective < -1e15:
            raise SolverError("objective unbounded below")
        if not converged:
            logger.debug(f"centering stalled at t={t:.3e}, objective {objective:.6g}")
            return z, SolveStatus.MAX_ITERATIONS, iterations, np.inf, t
        gap = weight / t
        if gap <= tol.opt_abs + tol.opt * abs(objective):
            return z, SolveStatus.OPTIMAL, iterations, gap, t
        t *= tol.mu
    return z, SolveStatus.MAX_ITERATIONS, iterations, weight / t, t


def _phase_one(problem: _BarrierProblem, z: np.ndarray, tol: SolverTolerances) -> Tuple[np.ndarray, int]:
    """
    Find a strictly feasible point by minimizing the common relaxation s.

    The relaxation is kept above -s0 (s0 its starting value) so that
    directions trading the variables against s stay bounded. Path following
    stops at the first iterate with s < 0.

    Raises:
        InfeasibleProblemError: If s cannot be driven below zero
        SolverError: If path following stops before either outcome is certain
    """
    violation = problem.max_violation(z)
    if not np.isfinite(violation):
        violation = 0.0
    s0 = max(violation, 0.0) + 1.0
    start = np.append(z, s0)
    augmented = problem.augmented()
    floor = np.zeros((1, start.shape[0]))
    floor[0, -1] = 1.0
    augmented.rows.append(RowData(a=floor, b=np.array([s0])))
    start_z, status, iterations, _, _ = _minimize(
        augmented, start, tol, stop=lambda za: za[-1] < 0.0
    )
    if start_z[-1] < 0.0:
        return start_z[:-1], iterations
    if status is not SolveStatus.OPTIMAL:
        raise SolverError(
            f"phase one did not converge: common violation {start_z[-1]:.3e}",
            violation=float(start_z[-1]),
        )
    raise InfeasibleProblemError(
        f"no strictly feasible point: smallest common violation {start_z[-1]:.3e}",
        violation=float(start_z[-1]),
    )


# =============================================================================
# Active-set driver
# =============================================================================

def _group_extreme_rows(ids: np.ndarray, values: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Row index of the smallest value within each constraint id, among candidates."""
    rows = np.flatnonzero(candidates)
    if rows.size == 0:
        return rows
    order = np.lexsort((values[rows], ids[rows]))
    ordered = rows[order]
    first = np.ones(ordered.size, dtype=bool)
    first[1:] = ids[ordered[1:]] != ids[ordered[:-1]]
    return ordered[first]


def _initial_working_set(block: ScalarBlock, allowed: np.ndarray, z: np.ndarray,
                         cap: int, previous: Optional[np.ndarray]) -> np.ndarray:
    if allowed.sum() <= cap:
        return np.flatnonzero(allowed)
    slack, scale = block.evaluate(z)
    relative = slack / scale
    chosen = _group_extreme_rows(block.ids, relative, allowed)
    if chosen.size > cap:
        chosen = chosen[np.argsort(relative[chosen], kind="stable")[:cap]]
    if previous is not None:
        chosen = np.union1d(chosen, previous[allowed[previous]])
    return np.sort(chosen)


def _summarize(program: ConvexProgram, psds: List[PsdConstraint], z: np.ndarray):
    per_id: Dict[int, Tuple[float, float]] = {}
    for block in program.blocks:
        slack, scale = block.evaluate(z)
        relative = slack / scale
        unique, inverse = np.unique(block.ids, return_inverse=True)
        lowest = np.full(unique.size, np.inf)
        lowest_rel = np.full(unique.size, np.inf)
        np.minimum.at(lowest, inverse, slack)
        np.minimum.at(lowest_rel, inverse, relative)
        for cid, s, rel in zip(unique.tolist(), lowest.tolist(), lowest_rel.tolist()):
            old = per_id.get(cid)
            per_id[cid] = (s, rel) if old is None else (min(old[0], s), min(old[1], rel))
    for psd in psds:
        matrix = psd.matrix(z)
        smallest = float(np.linalg.eigvalsh(matrix)[0])
        rel = smallest / max(1.0, float(np.max(np.abs(matrix))))
        old = per_id.get(psd.constraint_id)
        per_id[psd.constraint_id] = (smallest, rel) if old is None else (min(old[0], smallest), min(old[1], rel))
    ids = np.array(sorted(per_id), dtype=np.int64)
    slacks = np.array([per_id[i][0] for i in ids.tolist()], dtype=float)
    relative = np.array([per_id[i][1] for i in ids.tolist()], dtype=float)
    return ids, slacks, relative


def solve(program: ConvexProgram, tolerances: Optional[SolverTolerances] = None,
          exclude: Iterable[int] = (), start: Optional[Solution] = None) -> Solution:
    """
    Solve a convex program, optionally dropping some constraint ids.

    Args:
        program: The program
        tolerances: Stopping rules (defaults when omitted)
        exclude: Constraint ids whose rows are ignored
        start: Previous solution used as warm start (point and working set)

    Returns:
        Solution with status optimal, infeasible or max-iterations. Slacks
        are reported for every constraint id, excluded ones included.
    """
    tol = tolerances or SolverTolerances()
    excluded = np.array(sorted(set(int(i) for i in exclude)), dtype=np.int64)
    psds = program.variable_psd_constraints() + program.psd_constraints
    m = program.n_scalars
    if m == 0:
        raise ParameterError("program has no variables")

    allowed = [~np.isin(block.ids, excluded) for block in program.blocks]
    z = None if start is None or start.z is None else start.z.copy()
    reference = z if z is not None else np.zeros(m)
    cap = max(1, tol.working_set_cap // max(1, len(program.blocks)))
    working = []
    for b, block in enumerate(program.blocks):
        previous = start.working_set[b] if start is not None and len(start.working_set) > b else None
        working.append(_initial_working_set(block, allowed[b], reference, cap, previous))

    t0 = None
    if start is not None and start.status is SolveStatus.OPTIMAL:
        t0 = start.barrier_t / tol.mu ** 2

    iterations = 0
    status = SolveStatus.MAX_ITERATIONS
    gap, t_final = np.inf, 1.0
    try:
        for _ in range(tol.max_rounds):
            problem = _BarrierProblem(program.objective, [blk.rows(w) for blk, w in zip(program.blocks, working)], psds)
            if z is None or not problem.in_domain(z):
                z, steps = _phase_one(problem, np.zeros(m) if z is None else z, tol)
                iterations += steps
                t0 = None
            z, status, steps, gap, t_final = _minimize(problem, z, tol, t0=t0)
            iterations += steps

            added = 0
            for b, block in enumerate(program.blocks):
                slack, scale = block.evaluate(z)
                outside = np.ones(block.n_rows, dtype=bool)
                outside[working[b]] = False
                violated = allowed[b] & outside & (slack <= 0.0)
                if not violated.any():
                    continue
                new_rows = _group_extreme_rows(block.ids, slack / scale, violated)
                new_rows = new_rows[np.argsort((slack / scale)[new_rows], kind="stable")[:tol.batch_add]]
                working[b] = np.union1d(working[b], new_rows)
                added += new_rows.size
            if added == 0:
                break
            logger.debug(f"{program.name}: added {added} violated rows to the working set")
            t0 = None
        else:
            status = SolveStatus.MAX_ITERATIONS
    except InfeasibleProblemError as e:
        return Solution(status=SolveStatus.INFEASIBLE, values={}, z=None, objective=np.inf,
                        iterations=iterations, message=e.message)

    ids, slacks, relative = _summarize(program, psds, z)
    return Solution(
        status=status,
        values=program.unpack(z),
        z=z,
        objective=float(program.objective @ z),
        constraint_ids=ids,
        slack_values=slacks,
        relative_slacks=relative,
        iterations=iterations,
        duality_gap=float(gap),
        barrier_t=float(t_final),
        working_set=working,
        message="" if status is SolveStatus.OPTIMAL else "barrier method did not converge",
    )


# =============================================================================
# Projection
# =============================================================================

def project_psd(matrix: np.ndarray) -> np.ndarray:
    """
    Frobenius-nearest positive semidefinite matrix.

    Raises:
        ParameterError: If the input is not symmetric
    """
    matrix = np.asarray(matrix, dtype=float)
    if not is_symmetric(matrix):
        raise ParameterError("project_psd requires a symmetric matrix")
    eigenvalues, eigenvectors = np.linalg.eigh(0.5 * (matrix + matrix.T))
    clamped = np.clip(eigenvalues, 0.0, None)
    projected = (eigenvectors * clamped) @ eigenvectors.T
    return 0.5 * (projected + projected.T)
