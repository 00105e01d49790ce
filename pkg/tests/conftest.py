"""
Shared fixtures for the ScenAbs test suite.
"""

import copy
import json
import os
import sys

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.systems.jlss import JlssModel, benchmark_models, benchmark_system
from src.systems.scenarios import ScenarioSampler, X0Distribution


@pytest.fixture
def benchmark():
    """The six-state benchmark system."""
    return benchmark_system()


@pytest.fixture
def benchmark_reductions(benchmark):
    return benchmark_models(benchmark)


@pytest.fixture
def scalar_system():
    """Stable 1-D system with diffusion and jumps."""
    return JlssModel(A=[[-1.0]], F=[[0.3]], R=[[-0.5]], C=[[1.0]], nu=1.0, name="S1")


@pytest.fixture
def planar_system():
    """Stable 2-D system with a single output."""
    return JlssModel(
        A=[[-1.0, 0.5], [0.0, -2.0]],
        F=[[0.2, 0.0], [0.0, 0.1]],
        R=[[-0.3, 0.0], [0.0, -0.3]],
        C=[[1.0, 1.0]],
        nu=0.5,
        name="S2",
    )


@pytest.fixture
def planar_model(planar_system):
    """First state of the planar system, no diffusion."""
    return JlssModel(A=[[-1.0]], F=[[0.0]], R=[[-0.3]], C=[[1.0]], nu=0.5,
                     init_map=[[1.0, 1.0]], name="M2")


@pytest.fixture
def planar_sampler():
    return ScenarioSampler(X0Distribution.standard_normal(2), horizon=1.0, nu=0.5, max_step=0.01)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


TINY_EXPERIMENT = {
    "name": "tiny",
    "system": {
        "benchmark": False,
        "A": [[-1.0, 0.5], [0.0, -2.0]],
        "F": [[0.2, 0.0], [0.0, 0.1]],
        "R": [[-0.3, 0.0], [0.0, -0.3]],
        "C": [[1.0, 1.0]],
        "nu": 0.5,
        "horizon": 1.0,
        "max_step": 0.05,
    },
    "models": [
        {"name": "M", "A": [[-1.0]], "F": [[0.0]], "R": [[-0.3]], "C": [[1.0]], "init_map": [[1.0, 1.0]]}
    ],
    "bounds": {"eps": 0.25, "beta": 1e-3, "alphas": [0.1]},
    "optimization": {"accuracy": "scalar", "n_scenarios": 40},
    "validation": {"m": 50},
    "seeds": {"root": 11},
    "output": {"include_timings": False},
}


@pytest.fixture
def tiny_experiment():
    """Small two-state experiment document."""
    return copy.deepcopy(TINY_EXPERIMENT)


@pytest.fixture
def write_config(tmp_path):
    """Write an experiment document to a JSON file and return its path."""
    def _write(document, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(document))
        return str(path)
    return _write
