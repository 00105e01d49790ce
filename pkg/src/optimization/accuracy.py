"""
Accuracy Function Module.

Parametrizations of the accuracy function h(x0) that bounds the squared
output distance between system and model, and the moment data needed to
evaluate E[h(x0)] without sampling.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np

from src.systems.scenarios import X0Distribution, X0Kind
from src.utils.errors import DimensionError, ParameterError
from src.utils.validators import as_matrix, is_psd, is_symmetric

DEFAULT_MODE = 1

# Relative eigenvalue slack accepted on solver-produced Theta matrices
THETA_PSD_TOL = 1e-8


class AccuracyKind(str, Enum):
    SCALAR = "scalar"
    QUADRATIC_PER_MODE = "quadratic_per_mode"
    BASIS_EXPANSION = "basis_expansion"


# =============================================================================
# Moments
# =============================================================================

@dataclass(eq=False)
class MomentData:
    """Per-mode E[[x0; 1][x0; 1]' | mode] and mode probabilities."""
    moments: Dict[int, np.ndarray]
    probabilities: Dict[int, float]

    def __post_init__(self):
        if set(self.moments) != set(self.probabilities):
            raise ParameterError("moments and probabilities must cover the same modes")
        if not self.moments:
            raise ParameterError("at least one mode is required")
        sizes = set()
        for mode, moment in self.moments.items():
            moment = np.asarray(moment, dtype=float)
            if not is_psd(moment):
                raise ParameterError(f"moment matrix of mode {mode} must be symmetric PSD")
            if abs(moment[-1, -1] - 1.0) > 1e-9:
                raise ParameterError(f"moment matrix of mode {mode} must end with 1")
            self.moments[mode] = 0.5 * (moment + moment.T)
            sizes.add(moment.shape[0])
        if len(sizes) != 1:
            raise DimensionError("moment matrices of all modes must share one size")
        total = float(sum(self.probabilities.values()))
        if any(p < 0 for p in self.probabilities.values()) or abs(total - 1.0) > 1e-9:
            raise ParameterError(f"mode probabilities must be non-negative and sum to 1, got {total}")

    @property
    def modes(self):
        return sorted(self.moments)

    @property
    def state_dim(self) -> int:
        return next(iter(self.moments.values())).shape[0] - 1

    def weighted(self, mode: int) -> np.ndarray:
        """P(mode) times the conditional moment of that mode."""
        return self.probabilities[mode] * self.moments[mode]

    @classmethod
    def from_distribution(cls, x0_dist: X0Distribution, mode: int = DEFAULT_MODE) -> "MomentData":
        return cls({mode: x0_dist.augmented_moment()}, {mode: 1.0})

    @classmethod
    def from_point(cls, x0: Sequence[float], mode: int = DEFAULT_MODE) -> "MomentData":
        return cls.from_distribution(X0Distribution.point(x0), mode)

    @classmethod
    def from_samples(cls, x0s: np.ndarray, modes: Optional[Sequence[int]] = None) -> "MomentData":
        """Empirical conditional moments and mode frequencies."""
        x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
        labels = np.full(x0s.shape[0], DEFAULT_MODE) if modes is None else np.asarray(modes)
        augmented = np.hstack([x0s, np.ones((x0s.shape[0], 1))])
        moments, probabilities = {}, {}
        for mode in np.unique(labels).tolist():
            rows = augmented[labels == mode]
            moments[int(mode)] = rows.T @ rows / rows.shape[0]
            probabilities[int(mode)] = rows.shape[0] / x0s.shape[0]
        return cls(moments, probabilities)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "moments": {str(k): v.tolist() for k, v in self.moments.items()},
            "probabilities": {str(k): v for k, v in self.probabilities.items()},
        }


# =============================================================================
# Gaussian bump basis
# =============================================================================

@dataclass(frozen=True, eq=False)
class GaussianBasis:
    """Bumps exp(-(x0 - m_i)' V_i (x0 - m_i)) with PSD shape matrices V_i."""
    centers: np.ndarray
    shapes: np.ndarray

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        shapes = np.asarray(self.shapes, dtype=float)
        q, n = centers.shape
        if shapes.shape != (q, n, n):
            raise DimensionError(f"expected {q} shape matrices of size {n}x{n}, got {shapes.shape}")
        for i in range(q):
            if not is_psd(shapes[i]):
                raise ParameterError(f"shape matrix {i} must be symmetric PSD")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "shapes", shapes)

    @classmethod
    def isotropic(cls, centers: np.ndarray, width: float) -> "GaussianBasis":
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        if width <= 0:
            raise ParameterError(f"bump width must be positive, got {width}")
        shapes = np.repeat(np.eye(centers.shape[1])[None] / width ** 2, centers.shape[0], axis=0)
        return cls(centers, shapes)

    @property
    def size(self) -> int:
        return self.centers.shape[0]

    def evaluate(self, x0s: np.ndarray) -> np.ndarray:
        """Bump values, shape (N, q)."""
        x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
        delta = x0s[:, None, :] - self.centers[None, :, :]
        return np.exp(-np.einsum("nqi,qij,nqj->nq", delta, self.shapes, delta))

    def expectations(self, x0_dist: X0Distribution) -> np.ndarray:
        """E[bump_i(x0)] in closed form for gaussian and point x0."""
        if x0_dist.kind is X0Kind.POINT:
            return self.evaluate(x0_dist.mean[None])[0]
        n = x0_dist.dim
        values = np.empty(self.size)
        for i in range(self.size):
            V = self.shapes[i]
            delta = x0_dist.mean - self.centers[i]
            spread = np.eye(n) + 2.0 * V @ x0_dist.covariance
            weight = np.linalg.solve(spread, V)
            values[i] = np.exp(-delta @ weight @ delta) / np.sqrt(np.linalg.det(spread))
        return values

    def to_dict(self) -> Dict[str, Any]:
        return {"centers": self.centers.tolist(), "shapes": self.shapes.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GaussianBasis":
        return cls(np.asarray(data["centers"]), np.asarray(data["shapes"]))


# =============================================================================
# Accuracy model
# =============================================================================

@dataclass(eq=False)
class AccuracyModel:
    """
    Accuracy function h(x0).

    ``scalar`` is a constant h; ``quadratic_per_mode`` evaluates
    [x0; 1]' Theta_k [x0; 1] for the mode k of x0; ``basis_expansion`` is a
    non-negative combination of Gaussian bumps.
    """
    kind: AccuracyKind
    h: Optional[float] = None
    thetas: Dict[int, np.ndarray] = field(default_factory=dict)
    weights: Optional[np.ndarray] = None
    basis: Optional[GaussianBasis] = None

    def __post_init__(self):
        self.kind = AccuracyKind(self.kind)
        if self.kind is AccuracyKind.SCALAR:
            if self.h is None or not self.h >= 0:
                raise ParameterError(f"scalar accuracy must be >= 0, got {self.h}")
            self.h = float(self.h)
        elif self.kind is AccuracyKind.QUADRATIC_PER_MODE:
            if not self.thetas:
                raise ParameterError("quadratic accuracy needs at least one Theta")
            for mode, theta in list(self.thetas.items()):
                theta = np.asarray(theta, dtype=float)
                if not is_symmetric(theta, 1e-8) or not is_psd(theta, THETA_PSD_TOL):
                    raise ParameterError(f"Theta of mode {mode} must be symmetric PSD")
                self.thetas[int(mode)] = 0.5 * (theta + theta.T)
        else:
            if self.basis is None or self.weights is None:
                raise ParameterError("basis accuracy needs weights and a basis")
            self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
            if self.weights.shape[0] != self.basis.size:
                raise DimensionError("one weight per basis function is required")
            if np.any(self.weights < -THETA_PSD_TOL * max(1.0, float(np.max(np.abs(self.weights))))):
                raise ParameterError("basis weights must be non-negative")
            self.weights = np.clip(self.weights, 0.0, None)

    @classmethod
    def scalar(cls, h: float) -> "AccuracyModel":
        return cls(AccuracyKind.SCALAR, h=h)

    @classmethod
    def quadratic(cls, thetas: Union[np.ndarray, Dict[int, np.ndarray]]) -> "AccuracyModel":
        if not isinstance(thetas, dict):
            thetas = {DEFAULT_MODE: thetas}
        return cls(AccuracyKind.QUADRATIC_PER_MODE, thetas=dict(thetas))

    @classmethod
    def basis_expansion(cls, weights: np.ndarray, basis: GaussianBasis) -> "AccuracyModel":
        return cls(AccuracyKind.BASIS_EXPANSION, weights=weights, basis=basis)

    @property
    def parameter_count(self) -> int:
        if self.kind is AccuracyKind.SCALAR:
            return 1
        if self.kind is AccuracyKind.QUADRATIC_PER_MODE:
            size = next(iter(self.thetas.values())).shape[0]
            return len(self.thetas) * size * (size + 1) // 2
        return self.basis.size

    def evaluate(self, x0: np.ndarray, mode: int = DEFAULT_MODE) -> float:
        """h(x0) for one initial state."""
        return float(self.evaluate_many(np.asarray(x0, dtype=float)[None], [mode])[0])

    def evaluate_many(self, x0s: np.ndarray, modes: Optional[Sequence[int]] = None) -> np.ndarray:
        """h(x0) for a stack of initial states, shape (N,)."""
        x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
        if self.kind is AccuracyKind.SCALAR:
            return np.full(x0s.shape[0], self.h)
        if self.kind is AccuracyKind.BASIS_EXPANSION:
            return self.basis.evaluate(x0s) @ self.weights
        labels = np.full(x0s.shape[0], DEFAULT_MODE) if modes is None else np.asarray(modes)
        augmented = np.hstack([x0s, np.ones((x0s.shape[0], 1))])
        values = np.empty(x0s.shape[0])
        for mode in np.unique(labels).tolist():
            if mode not in self.thetas:
                raise ParameterError(f"no Theta for mode {mode}")
            theta = self.thetas[mode]
            if theta.shape[0] != augmented.shape[1]:
                raise DimensionError(f"Theta is {theta.shape[0]}x{theta.shape[0]}, x0 has size {x0s.shape[1]}")
            rows = labels == mode
            values[rows] = np.einsum("ni,ij,nj->n", augmented[rows], theta, augmented[rows])
        return values

    def expected_value(self, moments: Optional[MomentData] = None,
                       x0_dist: Optional[X0Distribution] = None) -> float:
        """E[h(x0)] from moment data (quadratic) or the x0 distribution (basis)."""
        if self.kind is AccuracyKind.SCALAR:
            return self.h
        if self.kind is AccuracyKind.QUADRATIC_PER_MODE:
            if moments is None:
                raise ParameterError("quadratic accuracy needs moment data")
            return float(sum(np.sum(self.thetas[k] * moments.weighted(k)) for k in moments.modes))
        if x0_dist is None:
            raise ParameterError("basis accuracy needs the x0 distribution")
        return float(self.basis.expectations(x0_dist) @ self.weights)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"kind": self.kind.value}
        if self.kind is AccuracyKind.SCALAR:
            data["h"] = self.h
        elif self.kind is AccuracyKind.QUADRATIC_PER_MODE:
            data["thetas"] = {str(k): v.tolist() for k, v in sorted(self.thetas.items())}
        else:
            data["weights"] = self.weights.tolist()
            data["basis"] = self.basis.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AccuracyModel":
        kind = AccuracyKind(data["kind"])
        if kind is AccuracyKind.SCALAR:
            return cls.scalar(data["h"])
        if kind is AccuracyKind.QUADRATIC_PER_MODE:
            return cls.quadratic({int(k): as_matrix(v, f"theta[{k}]") for k, v in data["thetas"].items()})
        return cls.basis_expansion(np.asarray(data["weights"]), GaussianBasis.from_dict(data["basis"]))


# =============================================================================
# Parameter counts
# =============================================================================

def accuracy_parameter_count(kind: Union[AccuracyKind, str], state_dim: int = 0,
                             n_modes: int = 1, n_basis: int = 0) -> int:
    """Decision variables of an accuracy parametrization."""
    kind = AccuracyKind(kind)
    if kind is AccuracyKind.SCALAR:
        return 1
    if kind is AccuracyKind.QUADRATIC_PER_MODE:
        return n_modes * (state_dim + 1) * (state_dim + 2) // 2
    if n_basis < 1:
        raise ParameterError("basis accuracy needs at least one basis function")
    return n_basis


def design_parameter_count(kind: Union[AccuracyKind, str], model_dim: int, system_dim: int,
                           n_modes: int = 1, n_basis: int = 0) -> int:
    """Accuracy parameters plus the entries of the initialization map."""
    return accuracy_parameter_count(kind, system_dim, n_modes, n_basis) + model_dim * system_dim
