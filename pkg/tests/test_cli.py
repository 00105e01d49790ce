"""
Tests for the command-line entry point and its exit codes.
"""

import json
import pytest
import sys
import os

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.app.cli import build_parser, main


@pytest.fixture(autouse=True)
def quiet_env(monkeypatch):
    monkeypatch.setenv("SCENABS_LOG_LEVEL", "WARNING")
    monkeypatch.setenv("SCENABS_WORKERS", "1")


# =============================================================================
# Sample Size Command
# =============================================================================

class TestSampleSizeCommand:
    """Tests for the sample-size subcommand."""

    def test_benchmark_values(self, capsys):
        code = main(["sample-size", "--eps", "0.25", "--beta", "1e-10", "--alpha", "0.10",
                     "--r", "28", "--d-vc", "28"])
        assert code == 0
        output = json.loads(capsys.readouterr().out)
        assert output["implicit"] == 1697
        assert output["chernoff"] == 5049
        assert output["vc"] == 10841

    def test_stable_convention(self, capsys):
        code = main(["sample-size", "--eps", "0.25", "--beta", "1e-10", "--alpha", "0.10",
                     "--r", "28", "--convention", "stable"])
        assert code == 0
        assert json.loads(capsys.readouterr().out)["implicit"] == 1703

    def test_invalid_parameters(self, capsys):
        code = main(["sample-size", "--eps", "1.5", "--beta", "1e-10", "--r", "28"])
        assert code == 2
        assert "error [parameter]" in capsys.readouterr().err


# =============================================================================
# Experiment Commands
# =============================================================================

class TestExperimentCommands:
    """Tests for config-driven subcommands."""

    def test_parser_overrides(self):
        args = build_parser().parse_args(["--workers", "2", "assess", "cfg.json", "--seed", "5",
                                          "--n-scenarios", "30", "--no-validate"])
        assert args.workers == 2
        assert args.seed == 5
        assert args.n_scenarios == 30
        assert args.no_validate

    def test_assess_writes_reports(self, tiny_experiment, write_config, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["--output-dir", str(out), "assess", write_config(tiny_experiment), "--n-scenarios", "30"])
        assert code == 0
        printed = json.loads(capsys.readouterr().out)
        assert printed["results"][0]["N"] == 30
        assert (out / "tiny_assess.json").is_file()
        assert (out / "tiny_assess.csv").read_text().splitlines()[0] == "model,alpha,N,J,eps_hat,ci_lo,ci_hi,seconds"
        assert (out / "tiny_M_alpha0.1.json").is_file()

    def test_seed_override_changes_results(self, tiny_experiment, write_config, tmp_path, capsys):
        path = write_config(tiny_experiment)
        main(["--output-dir", str(tmp_path / "a"), "assess", path, "--no-validate", "--seed", "1"])
        first = json.loads(capsys.readouterr().out)["results"][0]["J"]
        main(["--output-dir", str(tmp_path / "b"), "assess", path, "--no-validate", "--seed", "2"])
        second = json.loads(capsys.readouterr().out)["results"][0]["J"]
        assert first != second

    def test_validate_round_trip(self, tiny_experiment, write_config, tmp_path, capsys):
        config = write_config(tiny_experiment)
        out = tmp_path / "out"
        assert main(["--output-dir", str(out), "assess", config]) == 0
        assessed = json.loads(capsys.readouterr().out)["results"][0]
        code = main(["--output-dir", str(out), "validate", config,
                     "--solution", str(out / "tiny_M_alpha0.1.json"), "--model", "M"])
        assert code == 0
        validated = json.loads(capsys.readouterr().out)["results"][0]
        assert validated["eps_hat"] == assessed["eps_hat"]
        assert (out / "tiny_validate.json").is_file()

    def test_simulate_dump(self, tiny_experiment, write_config, tmp_path):
        out = tmp_path / "out"
        assert main(["--output-dir", str(out), "simulate", write_config(tiny_experiment), "--count", "2"]) == 0
        assert (out / "tiny_simulate_trajectories.csv").is_file()


# =============================================================================
# Exit Codes
# =============================================================================

class TestExitCodes:
    """Error categories map to distinct exit codes."""

    def test_missing_config(self, tmp_path, capsys):
        assert main(["assess", str(tmp_path / "absent.json")]) == 2
        assert "error [config]" in capsys.readouterr().err

    def test_alpha_not_below_eps(self, tiny_experiment, write_config, capsys):
        tiny_experiment["bounds"]["alphas"] = [0.25]
        assert main(["assess", write_config(tiny_experiment)]) == 2
        assert "invariant 0 <= alpha < eps violated" in capsys.readouterr().err

    def test_unknown_model(self, tiny_experiment, write_config, tmp_path):
        config = write_config(tiny_experiment)
        out = tmp_path / "out"
        assert main(["--output-dir", str(out), "assess", config, "--no-validate"]) == 0
        code = main(["--output-dir", str(out), "validate", config,
                     "--solution", str(out / "tiny_M_alpha0.1.json"), "--model", "nope"])
        assert code == 2

    def test_infeasible_certificate(self, tiny_experiment, write_config, tmp_path, capsys):
        tiny_experiment["system"]["A"] = [[1.0, 0.0], [0.0, 1.0]]
        code = main(["--output-dir", str(tmp_path), "bisim", write_config(tiny_experiment), "--no-validate"])
        assert code == 3
        assert "error [infeasible]" in capsys.readouterr().err

    def test_dimension_mismatch(self, tiny_experiment, write_config, tmp_path, capsys):
        tiny_experiment["models"][0]["init_map"] = [[1.0, 1.0, 1.0]]
        code = main(["--output-dir", str(tmp_path), "simulate", write_config(tiny_experiment), "--count", "1"])
        assert code == 4
        assert "error [dimension]" in capsys.readouterr().err
