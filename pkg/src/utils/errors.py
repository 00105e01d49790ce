"""
Error Hierarchy Module.

Every failure raised by the toolkit derives from ScenAbsError. Each class
carries a diagnostic ``category`` and the process ``exit_code`` the CLI
returns when the error reaches the top level.
"""

from typing import Any, Optional


class ScenAbsError(Exception):
    """Base class for all toolkit errors."""

    category: str = "internal"
    exit_code: int = 5

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context = context

    def to_dict(self) -> dict:
        return {"category": self.category, "message": self.message, **self.context}


class ParameterError(ScenAbsError, ValueError):
    """Invalid numeric parameter (probabilities, rates, horizons, counts)."""

    category = "parameter"
    exit_code = 2


class ConfigError(ScenAbsError, ValueError):
    """Configuration file missing, malformed or inconsistent."""

    category = "config"
    exit_code = 2


class DimensionError(ScenAbsError, ValueError):
    """Shape or time-grid mismatch between operands."""

    category = "dimension"
    exit_code = 4


class SimulationError(ScenAbsError):
    """The integrator produced a non-finite state."""

    category = "simulation"
    exit_code = 4


class SolverError(ScenAbsError):
    """The convex solver did not reach the requested accuracy."""

    category = "solver"
    exit_code = 3


class InfeasibleProblemError(SolverError):
    """Phase one certified that no strictly feasible point exists."""

    category = "infeasible"


class StallError(SolverError):
    """
    Constraint removal cannot make progress.

    The partially reduced solution reached before the stall is kept on
    ``partial`` so callers can still inspect or persist it.
    """

    category = "stall"

    def __init__(self, message: str, partial: Optional[Any] = None, **context: Any):
        super().__init__(message, **context)
        self.partial = partial


class StageError(ScenAbsError):
    """Wraps an error raised while the runner executed a named stage."""

    def __init__(self, stage: str, cause: ScenAbsError):
        super().__init__(f"stage '{stage}' failed: {cause.message}", stage=stage)
        self.stage = stage
        self.cause = cause
        self.category = cause.category
        self.exit_code = cause.exit_code
