"""
Unit tests for out-of-sample validation, deviation histograms and the
safety bound.
"""

import math
import pytest
import sys
import os
import numpy as np
from scipy.stats import norm

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.optimization.accuracy import AccuracyModel
from src.systems.jlss import JlssModel
from src.systems.scenarios import ScenarioSampler, X0Distribution
from src.utils.errors import DimensionError, ParameterError
from src.verification.bisimulation import solve_bisim_sdp
from src.verification.validation import (
    HalfPlane,
    clopper_pearson,
    deviation_histogram,
    estimate_violation,
    reach_probability,
    safety_bound,
)


@pytest.fixture
def frozen_model():
    """Output equals the initial state forever."""
    return JlssModel(A=[[0.0]], F=[[0.0]], R=[[0.0]], C=[[1.0]], nu=1.0, name="frozen")


@pytest.fixture
def scalar_sampler():
    return ScenarioSampler(X0Distribution.standard_normal(1), horizon=0.5, nu=1.0, max_step=0.05)


# =============================================================================
# Confidence Interval Tests
# =============================================================================

class TestClopperPearson:
    """Tests for the exact binomial interval."""

    def test_no_successes(self):
        low, high = clopper_pearson(0, 10, 0.95)
        assert low == 0.0
        assert high == pytest.approx(1.0 - 0.025 ** (1 / 10))

    def test_all_successes(self):
        low, high = clopper_pearson(10, 10, 0.95)
        assert low == pytest.approx(0.025 ** (1 / 10))
        assert high == 1.0

    def test_contains_point_estimate(self):
        low, high = clopper_pearson(127, 1000)
        assert low < 0.127 < high

    def test_narrows_with_m(self):
        wide = clopper_pearson(10, 100)
        narrow = clopper_pearson(100, 1000)
        assert narrow[1] - narrow[0] < wide[1] - wide[0]

    @pytest.mark.parametrize("k,m,confidence", [(3, 2, 0.99), (-1, 5, 0.99), (0, 0, 0.99), (1, 5, 1.0)])
    def test_rejects_invalid(self, k, m, confidence):
        with pytest.raises(ParameterError):
            clopper_pearson(k, m, confidence)


# =============================================================================
# Violation Estimate Tests
# =============================================================================

class TestEstimateViolation:
    """Tests for the Monte Carlo violation estimate."""

    def test_infinite_accuracy_never_violated(self, planar_system, planar_model, planar_sampler):
        report = estimate_violation(AccuracyModel.scalar(np.inf), planar_system, planar_model,
                                    m=20, seed=4, sampler=planar_sampler)
        assert report.eps_hat == 0.0
        assert report.violations == 0
        assert report.ci_low == 0.0

    def test_zero_accuracy_always_violated(self, planar_system, planar_model, planar_sampler):
        report = estimate_violation(AccuracyModel.scalar(0.0), planar_system, planar_model,
                                    m=20, seed=4, sampler=planar_sampler)
        assert report.eps_hat == 1.0
        assert report.ci_high == 1.0

    def test_deterministic(self, planar_system, planar_model, planar_sampler):
        accuracy = AccuracyModel.scalar(0.5)
        first = estimate_violation(accuracy, planar_system, planar_model, 30, 8, planar_sampler)
        second = estimate_violation(accuracy, planar_system, planar_model, 30, 8, planar_sampler)
        assert first.to_dict() == second.to_dict()

    def test_report_fields(self, planar_system, planar_model, planar_sampler):
        report = estimate_violation(AccuracyModel.scalar(0.5), planar_system, planar_model,
                                    m=25, seed=8, sampler=planar_sampler, confidence=0.95)
        assert report.eps_hat == report.violations / 25
        assert report.clopper_pearson == clopper_pearson(report.violations, 25, 0.95)
        assert report.to_dict()["seed"] == 8

    def test_certificate_accuracy(self, planar_system, planar_model, planar_sampler):
        certificate = solve_bisim_sdp(planar_system, planar_model)
        report = estimate_violation(certificate, planar_system, planar_model, 20, 2, planar_sampler)
        assert 0.0 <= report.eps_hat <= 1.0

    def test_rejects_empty(self, planar_system, planar_model, planar_sampler):
        with pytest.raises(ParameterError):
            estimate_violation(AccuracyModel.scalar(1.0), planar_system, planar_model, 0, 1, planar_sampler)


# =============================================================================
# Histogram Tests
# =============================================================================

class TestDeviationHistogram:
    """Tests for the worst-case deviation histograms."""

    def test_zero_accuracy_puts_all_mass_in_first_bin(self, planar_system, planar_model, planar_sampler):
        result = deviation_histogram(AccuracyModel.scalar(0.0), planar_system, planar_model,
                                     n_x0=6, n_w=3, seed=1, bins=10, sampler=planar_sampler)
        assert result.raw_histogram["count"].iloc[0] == 6
        assert result.raw_histogram["count"].sum() == 6
        assert np.all(result.raw == 0.0)

    def test_single_draws(self, planar_system, planar_model, planar_sampler):
        result = deviation_histogram(AccuracyModel.scalar(1.0), planar_system, planar_model,
                                     n_x0=1, n_w=1, seed=1, bins=5, sampler=planar_sampler)
        assert result.raw.shape == (1,)
        assert len(result.raw_histogram) == 5

    def test_raw_bounded_by_accuracy(self, planar_system, planar_model, planar_sampler):
        result = deviation_histogram(AccuracyModel.scalar(2.0), planar_system, planar_model,
                                     n_x0=5, n_w=4, seed=3, bins=8, sampler=planar_sampler)
        assert np.all(result.raw >= 0.0)
        assert np.all(result.raw <= 2.0)
        assert result.params == {"n_x0": 5, "n_w": 4, "bins": 8, "seed": 3}

    def test_zero_distance_dropped_from_normalized(self, scalar_system, scalar_sampler):
        twin = JlssModel(A=scalar_system.A, F=scalar_system.F, R=scalar_system.R, C=scalar_system.C,
                         nu=scalar_system.nu, init_map=[[1.0]])
        result = deviation_histogram(AccuracyModel.scalar(1.0), scalar_system, twin,
                                     n_x0=4, n_w=2, seed=0, bins=4, sampler=scalar_sampler)
        assert result.dropped == 4
        assert result.normalized.size == 0
        assert np.allclose(result.raw, 1.0)

    def test_rejects_bad_sizes(self, planar_system, planar_model, planar_sampler):
        with pytest.raises(ParameterError):
            deviation_histogram(AccuracyModel.scalar(1.0), planar_system, planar_model,
                                n_x0=0, n_w=1, seed=1, bins=5, sampler=planar_sampler)


# =============================================================================
# Safety Tests
# =============================================================================

class TestSafety:
    """Tests for the safety bound and reach estimates."""

    def test_safety_bound(self):
        assert safety_bound(0.3, 0.25) == pytest.approx(0.55)
        assert safety_bound(0.9, 0.25) == 1.0

    def test_safety_bound_rejects(self):
        with pytest.raises(ParameterError):
            safety_bound(1.5, 0.25)

    def test_half_plane(self):
        plane = HalfPlane([0.0, 2.0], 2.0)
        assert plane.hits(np.array([[0.0, 0.5], [0.0, 1.0]]))
        assert not plane.hits(np.array([[5.0, 0.5]]))
        enlarged = plane.enlarged(0.5)
        assert enlarged.offset == pytest.approx(1.0)
        assert enlarged.hits(np.array([[0.0, 0.5]]))

    def test_half_plane_errors(self):
        with pytest.raises(ParameterError):
            HalfPlane([0.0, 0.0], 1.0)
        with pytest.raises(DimensionError):
            HalfPlane([1.0], 1.0).hits(np.zeros((3, 2)))

    def test_reach_probability_oracle(self, frozen_model, scalar_sampler):
        p = reach_probability(frozen_model, scalar_sampler, m=2000, seed=6, unsafe=HalfPlane([1.0], 1.0))
        expected = 1.0 - norm.cdf(1.0)
        sigma = math.sqrt(expected * (1 - expected) / 2000)
        assert abs(p - expected) <= 4 * sigma

    def test_enlarged_reach_probability_oracle(self, frozen_model, scalar_sampler):
        p = reach_probability(frozen_model, scalar_sampler, m=2000, seed=6, unsafe=HalfPlane([1.0], 1.0),
                              accuracy=AccuracyModel.scalar(0.25))
        expected = 1.0 - norm.cdf(0.5)
        sigma = math.sqrt(expected * (1 - expected) / 2000)
        assert abs(p - expected) <= 4 * sigma
