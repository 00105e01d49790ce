"""
Sample Size Bounds Module.

Number N of scenarios needed so that a solution obtained after removing
floor(alpha * N) sampled constraints violates the chance constraint with
probability at most eps, at confidence 1 - beta. Three bounds are provided:
the implicit binomial-tail bound, its explicit Chernoff relaxation, and the
VC-dimension bound for non-convex problems.
"""

import math
from dataclasses import dataclass, asdict
from typing import Dict, Optional

import numpy as np
from loguru import logger
from scipy.special import gammaln, logsumexp
from scipy.stats import binom

from src.utils.errors import ParameterError


# Guard against alpha * N landing just below an integer in floating point
FLOOR_FUZZ = 1e-9

# Below this log-probability scipy's binomial logcdf is summed term by term instead
LOG_TAIL_FLOOR = -600.0


@dataclass(frozen=True)
class BoundParams:
    """Violation level, confidence and problem size for the bounds."""
    eps: float
    beta: float
    alpha: float = 0.0
    r: Optional[int] = None
    d_vc: Optional[int] = None

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise ParameterError(f"eps must lie in (0, 1), got {self.eps}")
        if not 0.0 < self.beta < 1.0:
            raise ParameterError(f"beta must lie in (0, 1), got {self.beta}")
        if not 0.0 <= self.alpha < self.eps:
            raise ParameterError(
                f"alpha must satisfy 0 <= alpha < eps, got alpha={self.alpha}, eps={self.eps}"
            )
        if self.r is None and self.d_vc is None:
            raise ParameterError("either r or d_vc must be given")
        if self.r is not None and self.r < 1:
            raise ParameterError(f"r must be a positive integer, got {self.r}")
        if self.d_vc is not None and self.d_vc < 1:
            raise ParameterError(f"d_vc must be a positive integer, got {self.d_vc}")

    def require_r(self) -> int:
        if self.r is None:
            raise ParameterError("this bound needs the decision-variable count r")
        return int(self.r)

    def require_d_vc(self) -> int:
        if self.d_vc is None:
            raise ParameterError("this bound needs the VC dimension d_vc")
        return int(self.d_vc)

    def to_dict(self) -> Dict:
        return asdict(self)


def removal_count(alpha: float, n_scenarios: int) -> int:
    """floor(alpha * N), the number of scenario constraints to remove."""
    return int(math.floor(alpha * n_scenarios + FLOOR_FUZZ))


# =============================================================================
# Implicit bound
# =============================================================================

def _log_choose(n, k):
    n, k = np.asarray(n, dtype=float), np.asarray(k, dtype=float)
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def log_binomial_cdf(m: int, n: int, eps: float) -> float:
    """
    log P[Bin(n, eps) <= m], accurate far into the lower tail.

    scipy's logcdf loses precision once the tail approaches the smallest
    double; below LOG_TAIL_FLOOR the probability masses are summed in log space.
    """
    if m >= n:
        return 0.0
    value = float(binom.logcdf(m, n, eps))
    if value > LOG_TAIL_FLOOR:
        return value
    return float(logsumexp(binom.logpmf(np.arange(m + 1), n, eps)))


def implicit_log_lhs(n_scenarios: int, p: BoundParams) -> float:
    """
    Log of C(k+r-1, k) * P[Bin(N, eps) <= k+r-1] with k = floor(alpha N).

    Returns log C(k+r-1, k) (the tail is 1) while k + r - 1 >= N.
    """
    r = p.require_r()
    k = removal_count(p.alpha, n_scenarios)
    m = k + r - 1
    return float(_log_choose(m, k)) + log_binomial_cdf(m, n_scenarios, p.eps)


def implicit_condition_holds(n_scenarios: int, p: BoundParams) -> bool:
    """Whether N scenarios satisfy the implicit bound."""
    if n_scenarios < 1:
        return False
    return implicit_log_lhs(n_scenarios, p) <= math.log(p.beta)


def _period(alpha: float, k: int) -> range:
    """All N with floor(alpha N) = k."""
    start = max(1, int(math.ceil(k / alpha)) - 2)
    while removal_count(alpha, start) < k:
        start += 1
    while start > 1 and removal_count(alpha, start - 1) >= k:
        start -= 1
    stop = int(math.ceil((k + 1) / alpha)) + 2
    while removal_count(alpha, stop) > k:
        stop -= 1
    return range(start, stop + 1)


def _first_true(lo: int, hi: int, predicate) -> int:
    """Smallest N in [lo, hi] with predicate(N), given predicate(hi) and monotonicity."""
    while lo < hi:
        mid = (lo + hi) // 2
        if predicate(mid):
            hi = mid
        else:
            lo = mid + 1
    return hi


def _first_holding_period(p: BoundParams, k_hi: int) -> int:
    """
    Lowest removal count k <= k_hi whose floor period ends on an N that
    satisfies the implicit bound.

    Every period end is screened at once with scipy's logcdf. Ends it
    reports as holding, or as deep enough in the tail to be imprecise,
    are re-checked in order with the exact scalar condition.
    """
    r = p.require_r()
    ks = np.arange(k_hi + 1)
    ends = np.array([_period(p.alpha, int(k))[-1] for k in ks])
    ms = ks + r - 1
    with np.errstate(divide="ignore", invalid="ignore"):
        tails = np.where(ms >= ends, 0.0, binom.logcdf(ms, ends, p.eps))
    screened = _log_choose(ms, ks) + tails
    imprecise = ~(tails > LOG_TAIL_FLOOR)
    candidates = np.flatnonzero((screened <= math.log(p.beta)) | imprecise)
    for k in candidates.tolist():
        if implicit_condition_holds(int(ends[k]), p):
            return k
    return k_hi


def min_N_implicit(p: BoundParams, convention: str = "first") -> int:
    """
    Smallest N that satisfies the implicit bound.

    With a fixed removal count k the condition is monotone in N, so the
    first satisfying N lies in the first floor period whose last N
    satisfies it. Every period up to the one containing a known satisfying
    N is checked, then the result is bisected inside the period found.
    ``convention="stable"`` instead returns the smallest N for which the
    condition also holds over the whole following floor period.

    Args:
        p: Bound parameters with r
        convention: ``"first"`` or ``"stable"``

    Returns:
        Sample size N

    Raises:
        ParameterError: On invalid parameters or convention
    """
    if convention not in ("first", "stable"):
        raise ParameterError(f"unknown convention '{convention}'")
    p.require_r()
    holds = lambda n: implicit_condition_holds(n, p)  # noqa: E731

    upper = min_N_chernoff(p)
    while not holds(upper):
        upper *= 2

    if p.alpha == 0.0:
        result = _first_true(1, upper, holds)
    else:
        k_star = _first_holding_period(p, removal_count(p.alpha, upper))
        period = _period(p.alpha, k_star)
        result = _first_true(period[0], period[-1], holds)

    if convention == "stable":
        span = int(math.ceil(1.0 / p.alpha)) if p.alpha > 0 else 1
        while not all(holds(result + j) for j in range(1, span + 1)):
            result += 1
            while not holds(result):
                result += 1

    logger.debug(f"implicit bound: N={result} for {p}")
    return result


# =============================================================================
# Explicit bounds
# =============================================================================

def chernoff_value(p: BoundParams) -> float:
    """Right-hand side of the Chernoff sample-size inequality."""
    r = p.require_r()
    gap2 = (p.eps - p.alpha) ** 2
    factor = (2.0 + p.alpha) * p.eps / gap2
    log_term = 0.0
    if r > 1:
        log_term = (r - 1) * math.log(2.0 * p.eps * (2.0 + p.alpha) * (r - 1) / gap2)
    return factor * (log_term + math.log(1.0 / p.beta)) + (r - 1) / 2.0


def min_N_chernoff(p: BoundParams) -> int:
    """Smallest integer N at or above the Chernoff value."""
    return max(1, int(math.ceil(chernoff_value(p))))


def vc_value(p: BoundParams) -> float:
    """Right-hand side of the VC-dimension sample-size inequality."""
    d = p.require_d_vc()
    gap2 = (p.eps - p.alpha) ** 2
    return 5.0 * p.eps / gap2 * (d * math.log(40.0 * p.eps / gap2) + math.log(4.0 / p.beta))


def min_N_vc(p: BoundParams) -> int:
    """Smallest integer N at or above the VC value."""
    return max(1, int(math.ceil(vc_value(p))))


def sample_size_table(p: BoundParams) -> Dict[str, Optional[int]]:
    """All bounds computable from the given parameters."""
    table: Dict[str, Optional[int]] = {"implicit": None, "chernoff": None, "vc": None}
    if p.r is not None:
        table["implicit"] = min_N_implicit(p)
        table["chernoff"] = min_N_chernoff(p)
    if p.d_vc is not None:
        table["vc"] = min_N_vc(p)
    return table
