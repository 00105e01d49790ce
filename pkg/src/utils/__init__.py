"""
Utils Package.

Validation helpers, the error hierarchy and logging setup for ScenAbs.
"""

from .errors import (
    ScenAbsError,
    ParameterError,
    ConfigError,
    DimensionError,
    SimulationError,
    SolverError,
    InfeasibleProblemError,
    StallError,
    StageError,
)
from .validators import (
    is_square,
    is_symmetric,
    is_psd,
    validate_matrix,
    validate_matrix_field,
    validate_probability,
    as_matrix,
    as_vector,
    require_symmetric,
    require_psd,
)

__all__ = [
    # Errors
    "ScenAbsError",
    "ParameterError",
    "ConfigError",
    "DimensionError",
    "SimulationError",
    "SolverError",
    "InfeasibleProblemError",
    "StallError",
    "StageError",
    # Validators
    "is_square",
    "is_symmetric",
    "is_psd",
    "validate_matrix",
    "validate_matrix_field",
    "validate_probability",
    "as_matrix",
    "as_vector",
    "require_symmetric",
    "require_psd",
]
