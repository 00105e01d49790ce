"""
Stochastic Bi-simulation Module.

Quadratic bi-simulation functions pi(xS, xM) = [xS; xM]' Q [xS; xM] for a
JLSS and a reduced model driven by the same Brownian motion and jump
process. Q must dominate the squared output mismatch and make pi a
super-martingale; the accuracy bound at x0 is pi(x0, L x0) / eps.
"""

from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from loguru import logger
from scipy.linalg import block_diag

from src.optimization.convex_core import ConvexProgram, SolveStatus, SolverTolerances, solve
from src.systems.jlss import JlssModel
from src.systems.scenarios import X0Distribution
from src.utils.errors import DimensionError, InfeasibleProblemError, ParameterError
from src.utils.validators import as_matrix, as_vector, require_psd

# Feasibility margin of the super-martingale LMI, relative to ||C'C||
LYAPUNOV_MARGIN = 1e-9

# Accepted LMI residual on a returned certificate, relative to ||Q||
RESIDUAL_TOL = 1e-6

LOWER_BOUND_ID = 0
LYAPUNOV_ID = 1


@dataclass(frozen=True, eq=False)
class BlockMatrices:
    """Stacked (system, model) matrices acting on [xS; xM]."""
    A: np.ndarray
    C: np.ndarray
    R: np.ndarray
    F: np.ndarray
    nu: float

    @property
    def size(self) -> int:
        return self.A.shape[0]

    def lyapunov(self, Q: np.ndarray) -> np.ndarray:
        """Q(A + nu R) + (A + nu R)'Q + F'QF + nu R'QR."""
        drift = self.A + self.nu * self.R
        value = Q @ drift + drift.T @ Q + self.F.T @ Q @ self.F + self.nu * self.R.T @ Q @ self.R
        return 0.5 * (value + value.T)


@dataclass(eq=False)
class BisimCertificate:
    """A feasible Q with its initialization map and residuals."""
    Q: np.ndarray
    L: np.ndarray
    eps: float
    objective: float
    lower_residual: float
    lyapunov_residual: float

    @property
    def J(self) -> float:
        """Expected accuracy E[pi(x0, L x0)] / eps."""
        return self.objective / self.eps

    def evaluate(self, x0: np.ndarray, mode: int = 1) -> float:
        return bisim_accuracy(self, x0)

    def evaluate_many(self, x0s: np.ndarray, modes=None) -> np.ndarray:
        x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
        stacked = np.hstack([x0s, x0s @ self.L.T])
        return np.einsum("ni,ij,nj->n", stacked, self.Q, stacked) / self.eps

    def to_dict(self) -> Dict[str, Any]:
        return {
            "Q": self.Q.tolist(),
            "L": self.L.tolist(),
            "eps": self.eps,
            "objective": self.objective,
            "J": self.J,
            "lower_residual": self.lower_residual,
            "lyapunov_residual": self.lyapunov_residual,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BisimCertificate":
        return cls(
            Q=as_matrix(data["Q"], "Q"), L=as_matrix(data["L"], "L"), eps=float(data["eps"]),
            objective=float(data["objective"]), lower_residual=float(data["lower_residual"]),
            lyapunov_residual=float(data["lyapunov_residual"]),
        )


def build_block_matrices(S: JlssModel, M: JlssModel) -> BlockMatrices:
    """
    Stack a system and a model.

    Raises:
        DimensionError: If their output dimensions differ
    """
    if S.output_dim != M.output_dim:
        raise DimensionError(f"output dimensions differ: {S.output_dim} vs {M.output_dim}")
    if S.nu != M.nu:
        raise ParameterError(f"system and model must share the jump rate, got {S.nu} and {M.nu}")
    return BlockMatrices(
        A=block_diag(S.A, M.A),
        C=np.hstack([S.C, -M.C]),
        R=block_diag(S.R, M.R),
        F=block_diag(S.F, M.F),
        nu=S.nu,
    )


def stacked_moment(second_moment: np.ndarray, L: np.ndarray) -> np.ndarray:
    """E[[x0; L x0][x0; L x0]'] from E[x0 x0']."""
    T = np.vstack([np.eye(L.shape[1]), L])
    return T @ second_moment @ T.T


def solve_bisim_sdp(
    S: JlssModel,
    M: JlssModel,
    L: Optional[np.ndarray] = None,
    x0_moments: Union[np.ndarray, X0Distribution, None] = None,
    eps: float = 0.25,
    tolerances: Optional[SolverTolerances] = None,
) -> BisimCertificate:
    """
    Minimize E[pi(x0, L x0)] over Q subject to the bi-simulation LMIs.

    Args:
        S: Reference system
        M: Reduced model
        L: Initialization map (the model's own map when omitted)
        x0_moments: E[x0 x0'] or the x0 distribution (standard normal when omitted)
        eps: Violation level used to scale the accuracy
        tolerances: Solver tolerances

    Returns:
        Certificate with J = optimal value / eps

    Raises:
        InfeasibleProblemError: If no quadratic certificate exists
        SolverError: If the solver stops early
    """
    if not 0.0 < eps < 1.0:
        raise ParameterError(f"eps must lie in (0, 1), got {eps}")
    L = M.init_map if L is None else as_matrix(L, "L", (M.state_dim, S.state_dim))
    if x0_moments is None:
        x0_moments = X0Distribution.standard_normal(S.state_dim)
    if isinstance(x0_moments, X0Distribution):
        second = x0_moments.second_moment()
    else:
        second = require_psd(as_matrix(x0_moments, "E[x0 x0']", (S.state_dim, S.state_dim)), "E[x0 x0']")

    blocks = build_block_matrices(S, M)
    size = blocks.size
    CtC = blocks.C.T @ blocks.C
    margin = LYAPUNOV_MARGIN * max(1.0, float(np.linalg.norm(CtC, 2)))

    program = ConvexProgram("bisimulation")
    program.add_matrix_variable("Q", size, psd=True)
    program.set_objective({"Q": stacked_moment(second, L)})
    program.add_psd_constraint(lambda v: v["Q"] - CtC, LOWER_BOUND_ID)
    program.add_psd_constraint(lambda v: -blocks.lyapunov(v["Q"]) - margin * np.eye(size), LYAPUNOV_ID)

    solution = solve(program, tolerances)
    if solution.status is SolveStatus.INFEASIBLE:
        raise InfeasibleProblemError(f"no quadratic bi-simulation function for {S.name}/{M.name}")
    solution.raise_for_status()

    Q = solution.values["Q"]
    lower = float(np.linalg.eigvalsh(Q - CtC)[0])
    lyapunov = float(np.linalg.eigvalsh(blocks.lyapunov(Q))[-1])
    scale = max(1.0, float(np.max(np.abs(Q))))
    if lower < -RESIDUAL_TOL * scale or lyapunov > RESIDUAL_TOL * scale:
        raise InfeasibleProblemError(
            f"certificate residuals out of tolerance: {lower:.3e}, {lyapunov:.3e}"
        )
    certificate = BisimCertificate(Q=Q, L=np.array(L, dtype=float), eps=eps,
                                   objective=solution.objective,
                                   lower_residual=lower, lyapunov_residual=lyapunov)
    logger.info(f"bisimulation {S.name}/{M.name}: J={certificate.J:.4f}")
    return certificate


def bisim_accuracy(cert: BisimCertificate, x0: np.ndarray) -> float:
    """
    pi(x0, L x0) / eps.

    Raises:
        DimensionError: If x0 does not match the certificate
    """
    x0 = as_vector(x0, "x0", cert.L.shape[1])
    stacked = np.concatenate([x0, cert.L @ x0])
    return float(stacked @ cert.Q @ stacked) / cert.eps


def certificate_margin(cert: BisimCertificate, blocks: BlockMatrices,
                       states: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """pi and the squared output mismatch on a stack of stacked states."""
    states = np.atleast_2d(states)
    pi = np.einsum("ni,ij,nj->n", states, cert.Q, states)
    mismatch = np.sum((states @ blocks.C.T) ** 2, axis=1)
    return pi, mismatch
