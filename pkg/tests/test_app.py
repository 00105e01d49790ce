"""
Tests for configuration schemas, settings, persistence and the experiment runner.
"""

import json
import pytest
import sys
import os
import numpy as np
from pydantic import ValidationError

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.app.cli import load_config
from src.app.persistence import load_result, read_json, save_result, write_json
from src.app.runner import RESULT_COLUMNS, ExperimentRunner, cell_label
from src.app.schemas import ExperimentConfig, rule_for_alpha
from src.app.settings import RunnerSettings
from src.optimization.accuracy import AccuracyModel
from src.optimization.bounds import BoundParams, min_N_implicit
from src.optimization.scenario_opt import RemovalRule, ScenarioSolution, assess_scalar
from src.utils.errors import ConfigError, StageError
from src.verification.bisimulation import BisimCertificate


CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data", "configs")


# =============================================================================
# Schema Tests
# =============================================================================

class TestSchemas:
    """Tests for experiment configuration validation."""

    @pytest.mark.parametrize("name", ["table1_m1.json", "table1.json", "design_m1.json"])
    def test_bundled_configs_validate(self, name):
        config = load_config(os.path.join(CONFIG_DIR, name))
        assert config.models

    def test_alpha_not_below_eps(self, tiny_experiment):
        tiny_experiment["bounds"]["alphas"] = [0.25]
        with pytest.raises(ValidationError, match="invariant 0 <= alpha < eps violated"):
            ExperimentConfig.model_validate(tiny_experiment)

    def test_alpha_error_through_loader(self, tiny_experiment, write_config):
        tiny_experiment["bounds"]["alphas"] = [0.3]
        with pytest.raises(ConfigError, match="invariant 0 <= alpha < eps violated"):
            load_config(write_config(tiny_experiment))

    def test_two_step_alpha2_below_eps(self, tiny_experiment):
        tiny_experiment["optimization"]["two_step"] = {"alpha1": 0.1, "alpha2": 0.3}
        with pytest.raises(ValidationError, match="alpha2 < eps"):
            ExperimentConfig.model_validate(tiny_experiment)

    def test_two_step_order(self, tiny_experiment):
        tiny_experiment["optimization"]["two_step"] = {"alpha1": 0.2, "alpha2": 0.1}
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate(tiny_experiment)

    def test_unknown_field(self, tiny_experiment):
        tiny_experiment["bounds"]["delta"] = 0.1
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate(tiny_experiment)

    def test_duplicate_model_names(self, tiny_experiment):
        tiny_experiment["models"].append(dict(tiny_experiment["models"][0]))
        with pytest.raises(ValidationError, match="unique"):
            ExperimentConfig.model_validate(tiny_experiment)

    def test_model_needs_source(self, tiny_experiment):
        tiny_experiment["models"] = [{"name": "M"}]
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate(tiny_experiment)

    def test_bad_reduction(self, tiny_experiment):
        tiny_experiment["system"] = {"benchmark": True}
        tiny_experiment["models"] = [{"name": "M", "reduction": "truncate(x)"}]
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate(tiny_experiment)

    def test_benchmark_matrices_cannot_be_overridden(self, tiny_experiment):
        tiny_experiment["system"]["benchmark"] = True
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate(tiny_experiment)

    def test_non_finite_matrix(self, tiny_experiment):
        tiny_experiment["system"]["A"] = [[float("nan"), 0.0], [0.0, -1.0]]
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate(tiny_experiment)

    def test_default_step(self):
        config = load_config(os.path.join(CONFIG_DIR, "table1_m1.json"))
        assert config.system.step == pytest.approx(1e-2)

    def test_basis_needs_section(self, tiny_experiment):
        tiny_experiment["optimization"]["accuracy"] = "basis_expansion"
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate(tiny_experiment)

    @pytest.mark.parametrize("alpha,rule", [
        (0.10, RemovalRule.GREEDY),
        (0.15, RemovalRule.RANDOM),
        (0.20, RemovalRule.BLOCK),
        (0.22, RemovalRule.BLOCK),
    ])
    def test_rule_for_alpha(self, alpha, rule):
        assert rule_for_alpha(alpha) is rule

    def test_explicit_rule_wins(self, tiny_experiment):
        tiny_experiment["optimization"]["removal_rule"] = "block"
        config = ExperimentConfig.model_validate(tiny_experiment)
        assert config.optimization.rule(0.05) is RemovalRule.BLOCK

    def test_loader_overrides(self, tiny_experiment, write_config):
        config = load_config(write_config(tiny_experiment), {"seeds": {"root": 99}})
        assert config.seeds.root == 99


# =============================================================================
# Settings Tests
# =============================================================================

class TestSettings:
    """Tests for environment-driven runner settings."""

    @pytest.fixture(autouse=True)
    def clean_env(self, monkeypatch):
        for name in ("OUTPUT_DIR", "LOG_LEVEL", "LOG_FILE", "WORKERS"):
            monkeypatch.setenv(f"SCENABS_{name}", "placeholder")
            monkeypatch.delenv(f"SCENABS_{name}")

    def test_defaults(self, tmp_path):
        settings = RunnerSettings.from_env(str(tmp_path / "missing.env"))
        assert settings == RunnerSettings()

    def test_environment(self, monkeypatch, tmp_path):
        monkeypatch.setenv("SCENABS_WORKERS", "3")
        monkeypatch.setenv("SCENABS_LOG_LEVEL", "debug")
        settings = RunnerSettings.from_env(str(tmp_path / "missing.env"))
        assert settings.workers == 3
        assert settings.log_level == "DEBUG"

    def test_dotenv_file(self, tmp_path):
        env_file = tmp_path / ".env"
        env_file.write_text("SCENABS_OUTPUT_DIR=from_file\n")
        assert RunnerSettings.from_env(str(env_file)).output_dir == "from_file"

    @pytest.mark.parametrize("value", ["abc", "0"])
    def test_bad_workers(self, monkeypatch, tmp_path, value):
        monkeypatch.setenv("SCENABS_WORKERS", value)
        with pytest.raises(ConfigError):
            RunnerSettings.from_env(str(tmp_path / "missing.env"))


# =============================================================================
# Persistence Tests
# =============================================================================

class TestPersistence:
    """Tests for stored solutions and certificates."""

    def test_solution_round_trip(self, tmp_path):
        solution = assess_scalar([1.0, 2.0, 3.0, 4.0], 0.2, eps=0.25, beta=1e-3, root_seed=5)
        loaded = load_result(save_result(solution, tmp_path / "solution.json"))
        assert isinstance(loaded, ScenarioSolution)
        assert loaded.objective == solution.objective
        assert loaded.removed == solution.removed

    def test_certificate_round_trip(self, tmp_path):
        certificate = BisimCertificate(Q=np.eye(2), L=np.ones((1, 1)), eps=0.25, objective=2.0,
                                       lower_residual=0.0, lyapunov_residual=-1.0)
        loaded = load_result(save_result(certificate, tmp_path / "cert.json"))
        assert isinstance(loaded, BisimCertificate)
        assert loaded.J == pytest.approx(8.0)

    def test_infinite_objective_survives(self, tmp_path):
        solution = assess_scalar([1.0, np.inf], 0.0)
        loaded = load_result(save_result(solution, tmp_path / "inf.json"))
        assert np.isinf(loaded.accuracy.h)

    def test_unknown_kind(self, tmp_path):
        path = write_json(tmp_path / "other.json", {"kind": "table", "version": 1, "payload": {}})
        with pytest.raises(ConfigError):
            load_result(path)

    def test_unknown_version(self, tmp_path):
        path = write_json(tmp_path / "old.json", {"kind": "scenario_solution", "version": 0, "payload": {}})
        with pytest.raises(ConfigError):
            load_result(path)

    def test_malformed_payload(self, tmp_path):
        path = write_json(tmp_path / "bad.json", {"kind": "scenario_solution", "version": 1, "payload": {}})
        with pytest.raises(ConfigError):
            load_result(path)

    def test_missing_and_invalid_files(self, tmp_path):
        with pytest.raises(ConfigError):
            read_json(tmp_path / "absent.json")
        broken = tmp_path / "broken.json"
        broken.write_text("{not json")
        with pytest.raises(ConfigError):
            read_json(broken)


# =============================================================================
# Runner Tests
# =============================================================================

class TestExperimentRunner:
    """Tests for the staged experiment workflows."""

    @pytest.fixture
    def runner_for(self):
        def _make(document):
            return ExperimentRunner(ExperimentConfig.model_validate(document), RunnerSettings())
        return _make

    def test_assess_row(self, runner_for, tiny_experiment):
        report = runner_for(tiny_experiment).run_assess()
        assert len(report.rows) == 1
        row = report.rows[0]
        assert row.N == 40
        assert row.alpha == 0.1
        assert 0.0 <= row.eps_hat <= 1.0
        assert row.ci_lo <= row.eps_hat <= row.ci_hi
        assert list(report.frame().columns) == RESULT_COLUMNS
        assert report.details[cell_label("M", 0.1)]["solution"]["removed"]

    def test_hybrid_metric_matches_euclidean_under_common_jumps(self, runner_for, tiny_experiment):
        plain = runner_for(tiny_experiment).run_assess()
        tiny_experiment["metric"] = {"kind": "sup", "point_metric": "hybrid_euclidean"}
        hybrid = runner_for(tiny_experiment).run_assess()
        assert hybrid.rows[0].J == plain.rows[0].J
        assert hybrid.rows[0].eps_hat == plain.rows[0].eps_hat
        assert hybrid.artifacts["M_alpha0.1"].removed == plain.artifacts["M_alpha0.1"].removed

    def test_hybrid_hausdorff_assess(self, runner_for, tiny_experiment):
        tiny_experiment["metric"] = {"kind": "directional_hausdorff", "point_metric": "euclidean"}
        plain = runner_for(tiny_experiment).run_assess(validate=False)
        tiny_experiment["metric"]["point_metric"] = "hybrid_euclidean"
        hybrid = runner_for(tiny_experiment).run_assess(validate=False)
        assert np.isfinite(hybrid.rows[0].J)
        assert hybrid.rows[0].J >= plain.rows[0].J

    def test_quadratic_assess(self, runner_for, tiny_experiment):
        tiny_experiment["optimization"]["accuracy"] = "quadratic_per_mode"
        report = runner_for(tiny_experiment).run_assess(validate=False)
        solution = report.artifacts["M_alpha0.1"]
        assert len(solution.removed) == 4
        assert report.rows[0].eps_hat is None

    def test_basis_assess(self, runner_for, tiny_experiment):
        tiny_experiment["optimization"]["accuracy"] = "basis_expansion"
        tiny_experiment["optimization"]["basis"] = {"n_centers": 4, "width": 1.5}
        tiny_experiment["bounds"]["alphas"] = [0.0]
        report = runner_for(tiny_experiment).run_assess(validate=False)
        assert report.artifacts["M_alpha0"].accuracy.basis.size == 4

    def test_byte_identical_reports(self, runner_for, tiny_experiment, tmp_path):
        first = runner_for(tiny_experiment).run_assess().write(tmp_path / "a")
        second = runner_for(tiny_experiment).run_assess().write(tmp_path / "b")
        for key in ("report", "results"):
            assert first[key].read_bytes() == second[key].read_bytes()

    def test_timings_reported_when_enabled(self, runner_for, tiny_experiment):
        tiny_experiment["output"]["include_timings"] = True
        report = runner_for(tiny_experiment).run_assess(validate=False)
        document = report.to_dict()
        assert "optimize" in document["timings"]
        assert document["results"][0]["seconds"] is not None

    def test_written_files(self, runner_for, tiny_experiment, tmp_path):
        paths = runner_for(tiny_experiment).run_assess().write(tmp_path)
        assert paths["results"].read_text().splitlines()[0] == ",".join(RESULT_COLUMNS)
        document = json.loads(paths["report"].read_text())
        assert document["seeds"]["root"] == 11
        assert (tmp_path / "tiny_M_alpha0.1.json").is_file()

    def test_bisim(self, runner_for, tiny_experiment):
        report = runner_for(tiny_experiment).run_bisim(validate=False)
        row = report.rows[0]
        assert row.alpha is None and row.N is None
        assert row.J > 0.0
        assert isinstance(report.artifacts["M_ssf"], BisimCertificate)

    def test_table1_has_both_columns(self, runner_for, tiny_experiment):
        report = runner_for(tiny_experiment).run_table1(validate=False)
        assert [r.alpha for r in report.rows] == [0.1, None]

    def test_design(self, runner_for, tiny_experiment):
        tiny_experiment["models"][0]["init_map"] = "optimize"
        tiny_experiment["optimization"]["n_scenarios"] = 10
        tiny_experiment["bounds"]["alphas"] = [0.05]
        report = runner_for(tiny_experiment).run_design()
        solution = report.artifacts["M_alpha0.05"]
        assert solution.design_params.shape == (1, 2)
        assert report.rows[0].eps_hat is not None

    def test_design_only_optimizes_configured_models(self, runner_for, tiny_experiment):
        tiny_experiment["models"].append({"name": "D", "reduction": "truncate(1)", "init_map": "optimize"})
        tiny_experiment["optimization"]["n_scenarios"] = 10
        tiny_experiment["bounds"]["alphas"] = [0.05]
        runner = runner_for(tiny_experiment)
        report = runner.run_design(validate=False)
        assert [row.model for row in report.rows] == ["M", "D"]
        assert report.artifacts["D_alpha0.05"].design_params.shape == (1, 2)
        assert report.artifacts["M_alpha0.05"].design_params is None
        study = runner.design_study(1)
        assert study["model"].tolist() == ["D"]

    def test_design_needs_an_optimized_model(self, runner_for, tiny_experiment):
        with pytest.raises(ConfigError, match="init_map 'optimize'"):
            runner_for(tiny_experiment).run_design(validate=False)

    def test_design_workflow_rejects_fixed_maps(self, tiny_experiment):
        tiny_experiment["optimization"]["workflow"] = "design"
        with pytest.raises(ValidationError, match="init_map 'optimize'"):
            ExperimentConfig.model_validate(tiny_experiment)
        tiny_experiment["models"][0]["init_map"] = "optimize"
        assert ExperimentConfig.model_validate(tiny_experiment).models[0].optimize_map

    def test_validate_stored_solution(self, runner_for, tiny_experiment, tmp_path):
        runner = runner_for(tiny_experiment)
        report = runner.run_assess()
        path = save_result(report.artifacts["M_alpha0.1"], tmp_path / "solution.json")
        validated = runner_for(tiny_experiment).run_validate(load_result(path), "M")
        assert validated.rows[0].eps_hat == report.rows[0].eps_hat
        assert not validated.artifacts

    def test_simulate_table(self, runner_for, tiny_experiment):
        report = runner_for(tiny_experiment).run_simulate(2)
        table = report.tables["trajectories"]
        assert list(table.columns) == ["scenario", "t", "S_y0", "M_y0", "jumps"]
        assert sorted(table["scenario"].unique()) == [0, 1]

    def test_sample_size_from_bound(self, runner_for, tiny_experiment):
        tiny_experiment["optimization"]["n_scenarios"] = None
        runner = runner_for(tiny_experiment)
        expected = min_N_implicit(BoundParams(eps=0.25, beta=1e-3, alpha=0.1, r=1))
        assert runner.sample_size(0.1, runner.parameter_count(runner.model("M"))) == expected

    def test_benchmark_sample_size(self):
        runner = ExperimentRunner(load_config(os.path.join(CONFIG_DIR, "table1_m1.json")), RunnerSettings())
        model = runner.model("M1")
        assert runner.parameter_count(model) == 28
        assert runner.sample_size(0.10, 28) == 1697

    def test_r_override_below_derived(self, runner_for, tiny_experiment):
        tiny_experiment["optimization"]["accuracy"] = "quadratic_per_mode"
        tiny_experiment["bounds"]["r"] = 3
        runner = runner_for(tiny_experiment)
        with pytest.raises(ConfigError, match="r consistency"):
            runner.parameter_count(runner.model("M"))

    def test_r_override_above_derived(self, runner_for, tiny_experiment):
        tiny_experiment["bounds"]["r"] = 10
        runner = runner_for(tiny_experiment)
        assert runner.parameter_count(runner.model("M")) == 10

    def test_unknown_model(self, runner_for, tiny_experiment):
        with pytest.raises(ConfigError):
            runner_for(tiny_experiment).model("M9")

    def test_setup_errors_name_the_stage(self, runner_for, tiny_experiment):
        tiny_experiment["x0"] = {"kind": "point", "mean": [1.0, 2.0, 3.0]}
        with pytest.raises(StageError) as info:
            runner_for(tiny_experiment)
        assert info.value.stage == "setup"
        assert info.value.exit_code == 2

    def test_accuracy_kinds_are_persistable(self, runner_for, tiny_experiment):
        report = runner_for(tiny_experiment).run_assess(validate=False)
        stored = report.artifacts["M_alpha0.1"]
        assert AccuracyModel.from_dict(stored.accuracy.to_dict()).h == stored.accuracy.h
