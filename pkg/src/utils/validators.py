"""
Matrix Validation Utilities Module.

Shape, symmetry and definiteness checks shared by the simulator, the
convex solver and the configuration schemas.
"""

from typing import Any, Optional, Tuple

import numpy as np

from src.utils.errors import DimensionError, ParameterError


# =============================================================================
# Constants
# =============================================================================

# Absolute tolerance for symmetry checks, scaled by the matrix magnitude
SYMMETRY_TOL = 1e-10

# Eigenvalue slack accepted when checking positive semidefiniteness
PSD_TOL = 1e-10


# =============================================================================
# Predicates
# =============================================================================

def is_square(matrix: np.ndarray) -> bool:
    """Return True for a 2-D array with equal row and column counts."""
    return matrix.ndim == 2 and matrix.shape[0] == matrix.shape[1]


def is_symmetric(matrix: np.ndarray, tol: float = SYMMETRY_TOL) -> bool:
    """
    Check symmetry up to a tolerance relative to the largest entry.

    Args:
        matrix: Candidate matrix
        tol: Relative tolerance

    Returns:
        True if ``matrix`` is square and symmetric within tolerance
    """
    if not is_square(matrix):
        return False
    scale = max(1.0, float(np.max(np.abs(matrix)))) if matrix.size else 1.0
    return bool(np.max(np.abs(matrix - matrix.T), initial=0.0) <= tol * scale)


def is_psd(matrix: np.ndarray, tol: float = PSD_TOL) -> bool:
    """
    Check that a symmetric matrix has no eigenvalue below ``-tol`` (relative).

    Args:
        matrix: Symmetric matrix
        tol: Relative eigenvalue tolerance

    Returns:
        True if the matrix is symmetric positive semidefinite within tolerance
    """
    if not is_symmetric(matrix):
        return False
    if matrix.size == 0:
        return True
    eigenvalues = np.linalg.eigvalsh(0.5 * (matrix + matrix.T))
    scale = max(1.0, float(np.max(np.abs(eigenvalues))))
    return bool(eigenvalues[0] >= -tol * scale)


# =============================================================================
# Validation Functions
# =============================================================================

def validate_matrix(value: Any, shape: Optional[Tuple[Optional[int], Optional[int]]] = None) -> Tuple[bool, str]:
    """
    Validate a row-major nested list (or array) as a finite real matrix.

    Args:
        value: Nested sequence or array
        shape: Expected (rows, cols); ``None`` entries match any size

    Returns:
        Tuple of (is_valid, error_message)
    """
    try:
        matrix = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        return False, "matrix entries must be real numbers arranged in equal-length rows"
    if matrix.ndim != 2:
        return False, f"expected a 2-D matrix, got {matrix.ndim} dimension(s)"
    if not np.all(np.isfinite(matrix)):
        return False, "matrix entries must be finite"
    if shape is not None:
        for axis, expected in enumerate(shape):
            if expected is not None and matrix.shape[axis] != expected:
                return False, f"expected shape {shape}, got {matrix.shape}"
    return True, ""


def validate_matrix_field(value: Any) -> list:
    """
    Pydantic field validator for matrix-valued configuration entries.

    Raises:
        ValueError: If the value is not a finite real matrix
    """
    is_valid, error = validate_matrix(value)
    if not is_valid:
        raise ValueError(error)
    return [[float(x) for x in row] for row in value]


def validate_probability(value: float, name: str, open_interval: bool = True) -> float:
    """
    Validate a probability-like parameter.

    Args:
        value: Parameter value
        name: Parameter name used in the diagnostic
        open_interval: Require 0 < value < 1 instead of 0 <= value <= 1

    Raises:
        ParameterError: If the value lies outside the interval
    """
    value = float(value)
    if open_interval and not 0.0 < value < 1.0:
        raise ParameterError(f"{name} must lie in (0, 1), got {value}")
    if not open_interval and not 0.0 <= value <= 1.0:
        raise ParameterError(f"{name} must lie in [0, 1], got {value}")
    return value


def as_matrix(value: Any, name: str, shape: Optional[Tuple[Optional[int], Optional[int]]] = None) -> np.ndarray:
    """
    Convert to a float 2-D array, raising on malformed input.

    Raises:
        DimensionError: If the value is not a matrix of the expected shape
    """
    is_valid, error = validate_matrix(value, shape)
    if not is_valid:
        raise DimensionError(f"{name}: {error}")
    return np.array(value, dtype=float)


def as_vector(value: Any, name: str, length: Optional[int] = None) -> np.ndarray:
    """
    Convert to a float 1-D array, raising on malformed input.

    Raises:
        DimensionError: If the value is not a finite vector of the expected length
    """
    vector = np.array(value, dtype=float).reshape(-1) if np.ndim(value) <= 1 else None
    if vector is None:
        raise DimensionError(f"{name}: expected a vector, got shape {np.shape(value)}")
    if length is not None and vector.shape[0] != length:
        raise DimensionError(f"{name}: expected length {length}, got {vector.shape[0]}")
    if not np.all(np.isfinite(vector)):
        raise DimensionError(f"{name}: entries must be finite")
    return vector


def require_symmetric(matrix: np.ndarray, name: str, tol: float = SYMMETRY_TOL) -> np.ndarray:
    """
    Return the symmetrized matrix or raise.

    Raises:
        ParameterError: If the matrix is not symmetric within tolerance
    """
    if not is_symmetric(matrix, tol):
        raise ParameterError(f"{name} must be a symmetric square matrix")
    return 0.5 * (matrix + matrix.T)


def require_psd(matrix: np.ndarray, name: str, tol: float = PSD_TOL) -> np.ndarray:
    """
    Return the symmetrized matrix or raise if it is not positive semidefinite.

    Raises:
        ParameterError: If the matrix is not symmetric PSD within tolerance
    """
    matrix = require_symmetric(matrix, name)
    if not is_psd(matrix, tol):
        raise ParameterError(f"{name} must be positive semidefinite")
    return matrix
