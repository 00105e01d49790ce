"""
JLSS Model Module.

Jump linear stochastic systems

    dx = A x dt + F x dB,    x(tau) = (I + R) x(tau-) at Poisson jump times,
    y = C x,

together with the reduced models derived from a reference system and the
six-state benchmark used in the bundled experiments.
"""

import dataclasses
import re
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Union

import numpy as np

from src.utils.errors import DimensionError, ParameterError
from src.utils.validators import as_matrix


# =============================================================================
# Model
# =============================================================================

@dataclass(frozen=True, eq=False)
class JlssModel:
    """
    A JLSS together with the map L from the reference system's initial state.

    For a reference system ``init_map`` is the identity. For a reduced model
    it is the ñ×n matrix applied to the system's x0.
    """
    A: np.ndarray
    F: np.ndarray
    R: np.ndarray
    C: np.ndarray
    nu: float
    init_map: Optional[np.ndarray] = None
    name: str = "system"

    def __post_init__(self):
        A = as_matrix(self.A, f"{self.name}.A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"{self.name}.A must be square, got {A.shape}")
        F = as_matrix(self.F, f"{self.name}.F", (n, n))
        R = as_matrix(self.R, f"{self.name}.R", (n, n))
        C = as_matrix(self.C, f"{self.name}.C", (None, n))
        nu = float(self.nu)
        if not np.isfinite(nu) or nu < 0:
            raise ParameterError(f"{self.name}.nu must be a finite rate >= 0, got {self.nu}")
        L = np.eye(n) if self.init_map is None else as_matrix(self.init_map, f"{self.name}.init_map", (n, None))

        for field_name, value in (("A", A), ("F", F), ("R", R), ("C", C), ("init_map", L)):
            value.setflags(write=False)
            object.__setattr__(self, field_name, value)
        object.__setattr__(self, "nu", nu)

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def output_dim(self) -> int:
        return self.C.shape[0]

    @property
    def source_dim(self) -> int:
        """State dimension of the reference system this model is initialized from."""
        return self.init_map.shape[1]

    def with_init_map(self, init_map: np.ndarray) -> "JlssModel":
        """Copy of the model with a different initialization map."""
        return dataclasses.replace(self, init_map=np.asarray(init_map, dtype=float))

    def same_dynamics(self, other: "JlssModel", atol: float = 0.0) -> bool:
        """Compare matrices, rate and init map entrywise."""
        pairs = [(self.A, other.A), (self.F, other.F), (self.R, other.R),
                 (self.C, other.C), (self.init_map, other.init_map)]
        return self.nu == other.nu and all(
            a.shape == b.shape and np.allclose(a, b, rtol=0.0, atol=atol) for a, b in pairs
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "A": self.A.tolist(),
            "F": self.F.tolist(),
            "R": self.R.tolist(),
            "C": self.C.tolist(),
            "nu": self.nu,
            "init_map": self.init_map.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "JlssModel":
        return cls(
            A=data["A"], F=data["F"], R=data["R"], C=data["C"], nu=data["nu"],
            init_map=data.get("init_map"), name=data.get("name", "system"),
        )


# =============================================================================
# Reductions
# =============================================================================

class ReductionKind(str, Enum):
    """Model reduction applied to a reference system."""
    TRUNCATE = "truncate"
    NO_DIFFUSION = "no_diffusion"
    NO_JUMP = "no_jump"


_TRUNCATE_PATTERN = re.compile(r"^truncate\((\d+)\)$")


@dataclass(frozen=True)
class Reduction:
    """A reduction kind plus the kept dimension for truncation."""
    kind: ReductionKind
    keep: Optional[int] = None

    @classmethod
    def parse(cls, text: str) -> "Reduction":
        """
        Parse ``truncate(k)``, ``no_diffusion`` or ``no_jump``.

        Raises:
            ParameterError: On an unknown specifier
        """
        text = text.strip().replace(" ", "")
        match = _TRUNCATE_PATTERN.match(text)
        if match:
            return cls(ReductionKind.TRUNCATE, int(match.group(1)))
        try:
            return cls(ReductionKind(text))
        except ValueError:
            raise ParameterError(
                f"unknown reduction '{text}'; expected truncate(k), no_diffusion or no_jump"
            ) from None

    def __str__(self) -> str:
        if self.kind is ReductionKind.TRUNCATE:
            return f"truncate({self.keep})"
        return self.kind.value


def build_reduced_model(
    system: JlssModel,
    kind: Union[Reduction, str],
    name: Optional[str] = None,
) -> JlssModel:
    """
    Derive a reduced model from a reference system.

    Args:
        system: Reference system
        kind: Reduction or its text form
        name: Optional model name (defaults to the reduction text)

    Returns:
        The reduced JlssModel; its rate is the system rate

    Raises:
        ParameterError: If a truncation size is out of range
    """
    reduction = Reduction.parse(kind) if isinstance(kind, str) else kind
    name = name or str(reduction)
    n = system.state_dim

    if reduction.kind is ReductionKind.TRUNCATE:
        k = reduction.keep
        if k is None or not 1 <= k <= n:
            raise ParameterError(f"truncate({k}) out of range for a {n}-state system")
        return JlssModel(
            A=system.A[:k, :k],
            F=system.F[:k, :k],
            R=system.R[:k, :k],
            C=system.C[:, :k],
            nu=system.nu,
            init_map=np.eye(n)[:k, :],
            name=name,
        )
    if reduction.kind is ReductionKind.NO_DIFFUSION:
        return dataclasses.replace(system, F=np.zeros_like(system.F), name=name)
    return dataclasses.replace(system, R=np.zeros_like(system.R), name=name)


# =============================================================================
# Benchmark catalogue
# =============================================================================

BENCHMARK_A = [
    [-1.0, -10.0, 0.0, 0.0, 0.0, 0.0],
    [10.0, -1.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, -2.0, -20.0, 0.0, 0.0],
    [0.0, 0.0, 20.0, -1.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, -2.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, -2.5],
]

BENCHMARK_F = (0.5 * np.array([
    [1, 0, 0, 0, 1, 1],
    [0, 1, 0, 0, 0, 0],
    [0, 0, 1, 0, 1, 1],
    [0, 0, 0, 1, 0, 0],
    [1, 0, 0, 0, 0, 1],
    [0, 0, 1, 0, 1, 0],
], dtype=float)).tolist()

BENCHMARK_R = (0.7 * np.eye(6)).tolist()

BENCHMARK_C = [
    [0.84, -1.03, 1.07, -0.88, 0.5, 0.0],
    [-0.6, -1.35, -0.26, -0.27, 0.0, -0.5],
]

BENCHMARK_NU = 0.5
BENCHMARK_HORIZON = 10.0

BENCHMARK_REDUCTIONS = {
    "M1": "truncate(4)",
    "M2": "no_diffusion",
    "M3": "no_jump",
}


def benchmark_system() -> JlssModel:
    """The six-state, two-output benchmark JLSS."""
    return JlssModel(
        A=BENCHMARK_A, F=BENCHMARK_F, R=BENCHMARK_R, C=BENCHMARK_C,
        nu=BENCHMARK_NU, name="S",
    )


def benchmark_models(system: Optional[JlssModel] = None) -> Dict[str, JlssModel]:
    """The three reduced benchmark models keyed M1, M2, M3."""
    system = system or benchmark_system()
    return {
        name: build_reduced_model(system, spec, name=name)
        for name, spec in BENCHMARK_REDUCTIONS.items()
    }
