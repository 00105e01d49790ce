"""
Unit tests for the bi-simulation baseline.
"""

import pytest
import sys
import os
import numpy as np

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.systems.jlss import JlssModel
from src.systems.scenarios import X0Distribution
from src.utils.errors import DimensionError, InfeasibleProblemError, ParameterError
from src.verification.bisimulation import (
    BisimCertificate,
    bisim_accuracy,
    build_block_matrices,
    certificate_margin,
    solve_bisim_sdp,
    stacked_moment,
)


@pytest.fixture
def planar_certificate(planar_system, planar_model):
    return solve_bisim_sdp(planar_system, planar_model)


class TestBlockMatrices:
    """Tests for the stacked system/model matrices."""

    def test_shapes(self, planar_system, planar_model):
        blocks = build_block_matrices(planar_system, planar_model)
        assert blocks.size == 3
        np.testing.assert_array_equal(blocks.C, [[1.0, 1.0, -1.0]])

    def test_output_mismatch(self, planar_model):
        wide = JlssModel(A=-np.eye(2), F=np.zeros((2, 2)), R=np.zeros((2, 2)), C=np.eye(2), nu=0.5)
        with pytest.raises(DimensionError):
            build_block_matrices(wide, planar_model)

    def test_rate_mismatch(self, scalar_system):
        other = JlssModel(A=[[-1.0]], F=[[0.0]], R=[[0.0]], C=[[1.0]], nu=2.0)
        with pytest.raises(ParameterError):
            build_block_matrices(scalar_system, other)

    def test_stacked_moment(self):
        L = np.array([[1.0, 1.0]])
        moment = stacked_moment(np.eye(2), L)
        np.testing.assert_allclose(moment, [[1, 0, 1], [0, 1, 1], [1, 1, 2]])


class TestSolveBisim:
    """Tests for the bi-simulation SDP."""

    def test_residuals(self, planar_system, planar_model, planar_certificate):
        blocks = build_block_matrices(planar_system, planar_model)
        Q = planar_certificate.Q
        assert np.linalg.eigvalsh(Q - blocks.C.T @ blocks.C)[0] >= -1e-6
        assert np.linalg.eigvalsh(blocks.lyapunov(Q))[-1] <= 1e-6
        assert planar_certificate.lower_residual >= -1e-6
        assert planar_certificate.lyapunov_residual <= 1e-6

    def test_J_is_expected_bound_over_eps(self, planar_certificate):
        moment = stacked_moment(np.eye(2), planar_certificate.L)
        expected = float(np.sum(planar_certificate.Q * moment)) / 0.25
        assert planar_certificate.J == pytest.approx(expected, rel=1e-8)

    def test_halving_eps_doubles_J(self, planar_system, planar_model, planar_certificate):
        halved = solve_bisim_sdp(planar_system, planar_model, eps=0.125)
        assert halved.J == pytest.approx(2.0 * planar_certificate.J, rel=1e-6)

    def test_bound_dominates_output_mismatch(self, planar_system, planar_model, planar_certificate, rng):
        x0s = rng.standard_normal((20, 2))
        mismatch = (x0s @ planar_system.C.T - x0s @ planar_certificate.L.T @ planar_model.C.T) ** 2
        bound = planar_certificate.evaluate_many(x0s) * planar_certificate.eps
        assert np.all(bound >= mismatch[:, 0] - 1e-6)

    def test_evaluate_matches_batch(self, planar_certificate, rng):
        x0s = rng.standard_normal((5, 2))
        batch = planar_certificate.evaluate_many(x0s)
        single = [planar_certificate.evaluate(x0) for x0 in x0s]
        np.testing.assert_allclose(batch, single)

    def test_identical_pair_has_tiny_bound(self, scalar_system):
        copy = JlssModel(A=scalar_system.A, F=scalar_system.F, R=scalar_system.R, C=scalar_system.C,
                         nu=scalar_system.nu, init_map=[[1.0]])
        certificate = solve_bisim_sdp(scalar_system, copy)
        assert 0.0 <= certificate.J < 1e-3

    def test_explicit_map_and_moments(self, planar_system, planar_model):
        L = np.array([[0.5, 0.5]])
        certificate = solve_bisim_sdp(planar_system, planar_model, L=L,
                                      x0_moments=X0Distribution.gaussian([0.0, 0.0], np.diag([2.0, 0.5])))
        np.testing.assert_array_equal(certificate.L, L)
        assert certificate.J > 0.0

    def test_unstable_system_is_infeasible(self):
        unstable = JlssModel(A=[[1.0]], F=[[0.0]], R=[[0.0]], C=[[1.0]], nu=1.0)
        model = JlssModel(A=[[-1.0]], F=[[0.0]], R=[[0.0]], C=[[1.0]], nu=1.0, init_map=[[1.0]])
        with pytest.raises(InfeasibleProblemError):
            solve_bisim_sdp(unstable, model)

    @pytest.mark.parametrize("eps", [0.0, 1.0])
    def test_rejects_eps(self, planar_system, planar_model, eps):
        with pytest.raises(ParameterError):
            solve_bisim_sdp(planar_system, planar_model, eps=eps)

    def test_round_trip(self, planar_certificate):
        restored = BisimCertificate.from_dict(planar_certificate.to_dict())
        assert restored.J == pytest.approx(planar_certificate.J)
        np.testing.assert_array_equal(restored.Q, planar_certificate.Q)


# =============================================================================
# Accuracy Function Tests
# =============================================================================

class TestBisimAccuracy:
    """Tests for pi(x0, L x0) / eps."""

    def test_zero_at_origin(self, planar_certificate):
        assert bisim_accuracy(planar_certificate, np.zeros(2)) == 0.0

    def test_homogeneous_of_degree_two(self, planar_certificate, rng):
        x0 = rng.standard_normal(2)
        base = bisim_accuracy(planar_certificate, x0)
        assert bisim_accuracy(planar_certificate, 3.0 * x0) == pytest.approx(9.0 * base, rel=1e-10)

    def test_matches_certificate_evaluate(self, planar_certificate, rng):
        x0 = rng.standard_normal(2)
        assert planar_certificate.evaluate(x0) == pytest.approx(bisim_accuracy(planar_certificate, x0))

    def test_dimension_mismatch(self, planar_certificate):
        with pytest.raises(DimensionError):
            bisim_accuracy(planar_certificate, np.zeros(3))

    def test_margin_on_stacked_states(self, planar_system, planar_model, planar_certificate, rng):
        blocks = build_block_matrices(planar_system, planar_model)
        states = rng.standard_normal((50, blocks.size))
        pi, mismatch = certificate_margin(planar_certificate, blocks, states)
        norms = np.sum(states ** 2, axis=1)
        assert np.all(pi >= mismatch - 1e-5 * norms)
