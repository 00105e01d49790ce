"""
Verification Package.

Bi-simulation baseline and Monte Carlo validation of accuracy functions.
"""

from .bisimulation import (
    BlockMatrices,
    BisimCertificate,
    build_block_matrices,
    solve_bisim_sdp,
    bisim_accuracy,
)
from .validation import (
    ViolationReport,
    DeviationHistogram,
    HalfPlane,
    clopper_pearson,
    estimate_violation,
    deviation_histogram,
    safety_bound,
    reach_probability,
)

__all__ = [
    "BlockMatrices",
    "BisimCertificate",
    "build_block_matrices",
    "solve_bisim_sdp",
    "bisim_accuracy",
    "ViolationReport",
    "DeviationHistogram",
    "HalfPlane",
    "clopper_pearson",
    "estimate_violation",
    "deviation_histogram",
    "safety_bound",
    "reach_probability",
]
