"""
Validation Module.

Out-of-sample checks of an accuracy function: Monte Carlo estimate of the
violation probability with a Clopper-Pearson interval, histograms of the
worst-case deviation per initial state, and the safety-probability bound
obtained by enlarging an unsafe set.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Protocol, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger
from scipy.stats import beta as beta_dist

from src.metrics.distance import DistanceSpec, distance, sample_squared_distances
from src.optimization.accuracy import AccuracyModel
from src.systems.jlss import JlssModel
from src.systems.scenarios import ScenarioSampler, X0Distribution, derive_seed, validation_root
from src.systems.simulator import parallel_map, simulate
from src.utils.errors import DimensionError, ParameterError
from src.utils.validators import as_vector, validate_probability
from src.verification.bisimulation import BisimCertificate


DEFAULT_CONFIDENCE = 0.99

# Streams of the validation seed domain
VIOLATION_STREAM = 0
HISTOGRAM_X0_STREAM = 2
HISTOGRAM_W_STREAM = 3
REACH_STREAM = 4


class AccuracyFunction(Protocol):
    def evaluate_many(self, x0s: np.ndarray, modes: Optional[Sequence[int]] = None) -> np.ndarray:
        ...


def _validated_model(accuracy: Union[AccuracyModel, BisimCertificate, Any], model: JlssModel) -> JlssModel:
    """A bi-simulation certificate is only valid with its own initialization map."""
    if isinstance(accuracy, BisimCertificate):
        return model.with_init_map(accuracy.L)
    return model


# =============================================================================
# Violation probability
# =============================================================================

@dataclass
class ViolationReport:
    """Monte Carlo estimate of P{D^2 > h(x0)} on fresh scenarios."""
    eps_hat: float
    m: int
    violations: int
    ci_low: float
    ci_high: float
    confidence: float = DEFAULT_CONFIDENCE
    seed: Optional[int] = None

    @property
    def clopper_pearson(self):
        return self.ci_low, self.ci_high

    def to_dict(self) -> Dict[str, Any]:
        return {
            "eps_hat": self.eps_hat,
            "m": self.m,
            "violations": self.violations,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "confidence": self.confidence,
            "seed": self.seed,
        }


def clopper_pearson(k: int, m: int, confidence: float = DEFAULT_CONFIDENCE):
    """
    Exact two-sided binomial confidence interval.

    Args:
        k: Number of successes
        m: Number of trials
        confidence: Coverage, in (0, 1)

    Returns:
        (lower, upper)
    """
    if m < 1 or not 0 <= k <= m:
        raise ParameterError(f"need 0 <= k <= m and m >= 1, got k={k}, m={m}")
    if not 0.0 < confidence < 1.0:
        raise ParameterError(f"confidence must lie in (0, 1), got {confidence}")
    tail = (1.0 - confidence) / 2.0
    low = 0.0 if k == 0 else float(beta_dist.ppf(tail, k, m - k + 1))
    high = 1.0 if k == m else float(beta_dist.ppf(1.0 - tail, k + 1, m - k))
    return low, high


def estimate_violation(
    accuracy: AccuracyFunction,
    system: JlssModel,
    model: JlssModel,
    m: int,
    seed: int,
    sampler: ScenarioSampler,
    spec: DistanceSpec = DistanceSpec(),
    workers: int = 1,
    confidence: float = DEFAULT_CONFIDENCE,
) -> ViolationReport:
    """
    Estimate the violation probability of an accuracy function.

    Scenarios come from the validation domain of ``seed``, never from the
    training stream of the same root.

    Args:
        accuracy: AccuracyModel or BisimCertificate
        system, model: Compared JLSS pair (a certificate brings its own map)
        m: Number of fresh scenarios
        seed: Experiment root seed
        sampler: Scenario sampling settings
        spec: Distance definition
        workers: Simulation processes
        confidence: Coverage of the Clopper-Pearson interval

    Returns:
        ViolationReport
    """
    if m < 1:
        raise ParameterError(f"m must be >= 1, got {m}")
    root = validation_root(seed)
    x0s, squared = sample_squared_distances(system, _validated_model(accuracy, model), sampler,
                                            root, m, spec, workers, stream=VIOLATION_STREAM)
    violations = int(np.count_nonzero(squared > accuracy.evaluate_many(x0s)))
    low, high = clopper_pearson(violations, m, confidence)
    report = ViolationReport(eps_hat=violations / m, m=m, violations=violations,
                             ci_low=low, ci_high=high, confidence=confidence, seed=seed)
    logger.info(f"eps_hat={report.eps_hat:.4f} ({violations}/{m}), CI=[{low:.4f}, {high:.4f}]")
    return report


# =============================================================================
# Deviation histograms
# =============================================================================

@dataclass(frozen=True)
class DeviationTask:
    """Worst-case deviation at one initial state over several input realizations."""
    accuracy: Any
    system: JlssModel
    model: JlssModel
    sampler: ScenarioSampler
    spec: DistanceSpec
    root: int
    n_w: int

    def __call__(self, index: int):
        rng = np.random.default_rng(derive_seed(self.root, HISTOGRAM_X0_STREAM, index))
        x0 = self.sampler.x0_dist.sample(rng)
        fixed = self.sampler.with_x0(X0Distribution.point(x0))
        squared = np.empty(self.n_w)
        for j in range(self.n_w):
            scenario = fixed.sample(derive_seed(self.root, HISTOGRAM_W_STREAM, index, j))
            squared[j] = distance(self.spec, simulate(self.system, scenario),
                                  simulate(self.model, scenario)) ** 2
        h = float(self.accuracy.evaluate_many(x0[None])[0])
        best = int(np.argmax(h - squared))
        raw = max(h - squared[best], 0.0)
        normalized = raw / squared[best] if squared[best] > 0 else np.nan
        return raw, normalized


@dataclass
class DeviationHistogram:
    """Raw and normalized deviation samples with their histograms."""
    raw: np.ndarray
    normalized: np.ndarray
    raw_histogram: pd.DataFrame
    normalized_histogram: pd.DataFrame
    dropped: int = 0
    params: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "raw": self.raw_histogram.to_dict(orient="list"),
            "normalized": self.normalized_histogram.to_dict(orient="list"),
            "dropped": self.dropped,
            "params": dict(self.params),
        }


def _histogram_frame(values: np.ndarray, bins: int) -> pd.DataFrame:
    """Two-column (bin_center, count) histogram over [0, max]."""
    upper = float(values.max()) if values.size and values.max() > 0 else 1.0
    counts, edges = np.histogram(values, bins=bins, range=(0.0, upper))
    return pd.DataFrame({"bin_center": 0.5 * (edges[:-1] + edges[1:]), "count": counts})


def deviation_histogram(
    accuracy: AccuracyFunction,
    system: JlssModel,
    model: JlssModel,
    n_x0: int,
    n_w: int,
    seed: int,
    bins: int,
    sampler: ScenarioSampler,
    spec: DistanceSpec = DistanceSpec(),
    workers: int = 1,
) -> DeviationHistogram:
    """
    Histogram of max_w [h(x0) - D^2]^+ over n_x0 initial states.

    The normalized variant divides each value by D^2 at the maximizing
    realization; states where that distance is zero are dropped from it.
    """
    if n_x0 < 1 or n_w < 1:
        raise ParameterError(f"n_x0 and n_w must be >= 1, got {n_x0} and {n_w}")
    if bins < 1:
        raise ParameterError(f"bins must be >= 1, got {bins}")
    task = DeviationTask(accuracy, system, _validated_model(accuracy, model), sampler, spec,
                         validation_root(seed), n_w)
    results = parallel_map(task, list(range(n_x0)), workers)
    raw = np.array([r for r, _ in results], dtype=float)
    normalized = np.array([q for _, q in results], dtype=float)
    dropped = int(np.count_nonzero(np.isnan(normalized)))
    if dropped:
        logger.warning(f"{dropped} initial states with zero distance left out of the normalized histogram")
    normalized = normalized[~np.isnan(normalized)]
    return DeviationHistogram(
        raw=raw,
        normalized=normalized,
        raw_histogram=_histogram_frame(raw, bins),
        normalized_histogram=_histogram_frame(normalized, bins),
        dropped=dropped,
        params={"n_x0": n_x0, "n_w": n_w, "bins": bins, "seed": seed},
    )


# =============================================================================
# Safety probability
# =============================================================================

def safety_bound(model_reach_prob: float, eps: float) -> float:
    """P{system reaches U} <= min(1, P{model reaches enlarged U} + eps)."""
    validate_probability(model_reach_prob, "model reach probability", open_interval=False)
    validate_probability(eps, "eps", open_interval=False)
    return min(1.0, float(model_reach_prob) + float(eps))


@dataclass(frozen=True)
class HalfPlane:
    """Unsafe set {y : normal . y >= offset}."""
    normal: np.ndarray
    offset: float

    def __post_init__(self):
        normal = as_vector(self.normal, "half-plane normal")
        if not np.any(normal):
            raise ParameterError("half-plane normal must be nonzero")
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", float(self.offset))

    def enlarged(self, width: float) -> "HalfPlane":
        """All points within Euclidean distance ``width`` of the set."""
        return HalfPlane(self.normal, self.offset - width * float(np.linalg.norm(self.normal)))

    def hits(self, values: np.ndarray) -> bool:
        values = np.atleast_2d(values)
        if values.shape[1] != self.normal.size:
            raise DimensionError(f"half-plane in R^{self.normal.size}, outputs in R^{values.shape[1]}")
        return bool(np.any(values @ self.normal >= self.offset))


@dataclass(frozen=True)
class ReachTask:
    """Whether one model path enters the (optionally enlarged) unsafe set."""
    model: JlssModel
    sampler: ScenarioSampler
    unsafe: HalfPlane
    accuracy: Any = None

    def __call__(self, seed: int) -> bool:
        scenario = self.sampler.sample(seed)
        target = self.unsafe
        if self.accuracy is not None:
            h = float(self.accuracy.evaluate_many(scenario.x0[None])[0])
            target = target.enlarged(np.sqrt(max(h, 0.0)))
        return target.hits(simulate(self.model, scenario).values)


def reach_probability(
    model: JlssModel,
    sampler: ScenarioSampler,
    m: int,
    seed: int,
    unsafe: HalfPlane,
    accuracy: Optional[AccuracyFunction] = None,
    workers: int = 1,
) -> float:
    """
    Monte Carlo probability that a path reaches the unsafe set.

    With ``accuracy`` the set is enlarged by sqrt(h(x0)) per path, giving the
    model-side term of the safety bound; without it this is a direct estimate
    for whatever JLSS is passed.
    """
    if m < 1:
        raise ParameterError(f"m must be >= 1, got {m}")
    seeds: List[int] = [derive_seed(validation_root(seed), REACH_STREAM, i) for i in range(m)]
    hits = parallel_map(ReachTask(model, sampler, unsafe, accuracy), seeds, workers)
    return float(np.mean(hits))
