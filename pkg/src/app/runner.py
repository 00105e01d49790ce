"""
Experiment Runner Module.

Executes configured experiments stage by stage: sample size, scenario
extraction and simulation, constraint removal, bi-simulation baseline and
out-of-sample validation. Every stage logs under its own name and wraps
toolkit errors in a StageError naming it.
"""

import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from src.app.persistence import Stored, save_result, write_json
from src.app.schemas import ExperimentConfig, Workflow
from src.app.settings import RunnerSettings
from src.metrics.distance import sample_squared_distances
from src.optimization.accuracy import (
    AccuracyKind,
    GaussianBasis,
    MomentData,
    accuracy_parameter_count,
    design_parameter_count,
)
from src.optimization.bounds import BoundParams, min_N_implicit
from src.optimization.convex_core import SolverTolerances
from src.optimization.scenario_opt import (
    ScenarioSolution,
    assess_basis,
    assess_quadratic,
    assess_scalar,
    design_init_map,
    two_step_design,
)
from src.systems.jlss import JlssModel
from src.systems.scenarios import ScenarioSampler, derive_seed, validation_root
from src.systems.simulator import simulate, simulate_design_data
from src.utils.errors import ConfigError, ScenAbsError, StageError
from src.verification.bisimulation import solve_bisim_sdp
from src.verification.validation import ViolationReport, deviation_histogram, estimate_violation


RESULT_COLUMNS = ["model", "alpha", "N", "J", "eps_hat", "ci_lo", "ci_hi", "seconds"]

# Seed streams used by the runner itself
TRAINING_STREAM = 0
BASIS_STREAM = 5
REPEAT_STREAM = 6


# =============================================================================
# Reports
# =============================================================================

@dataclass
class ResultRow:
    """One line of the results table."""
    model: str
    alpha: Optional[float]
    N: Optional[int]
    J: float
    eps_hat: Optional[float] = None
    ci_lo: Optional[float] = None
    ci_hi: Optional[float] = None
    seconds: Optional[float] = None


@dataclass
class ExperimentReport:
    """Summary record, tables and stored solutions of one run."""
    name: str
    command: str
    config: Dict[str, Any]
    seeds: Dict[str, int]
    include_timings: bool = True
    rows: List[ResultRow] = field(default_factory=list)
    details: Dict[str, Any] = field(default_factory=dict)
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    artifacts: Dict[str, Stored] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)

    def _row_dict(self, row: ResultRow) -> Dict[str, Any]:
        values = asdict(row)
        if not self.include_timings:
            values["seconds"] = None
        return values

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([self._row_dict(r) for r in self.rows], columns=RESULT_COLUMNS)

    def to_dict(self) -> Dict[str, Any]:
        document = {
            "name": self.name,
            "command": self.command,
            "config": self.config,
            "seeds": self.seeds,
            "columns": RESULT_COLUMNS,
            "results": [self._row_dict(r) for r in self.rows],
            "details": self.details,
        }
        if self.include_timings:
            document["timings"] = {k: round(v, 6) for k, v in self.timings.items()}
        return document

    def write(self, directory: Union[str, Path]) -> Dict[str, Path]:
        """
        Write the JSON summary, the results CSV, extra tables and solutions.

        Returns:
            Mapping from artifact label to written path
        """
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        stem = f"{self.name}_{self.command}"
        paths = {"report": write_json(out / f"{stem}.json", self.to_dict())}
        if self.rows:
            paths["results"] = out / f"{stem}.csv"
            self.frame().to_csv(paths["results"], index=False)
        for key, table in self.tables.items():
            paths[key] = out / f"{stem}_{key}.csv"
            table.to_csv(paths[key], index=False)
        for label, result in self.artifacts.items():
            paths[label] = save_result(result, out / f"{self.name}_{label}.json")
        logger.info(f"wrote {len(paths)} file(s) to {out}")
        return paths


def cell_label(model: str, alpha: Optional[float]) -> str:
    return f"{model}_ssf" if alpha is None else f"{model}_alpha{alpha:g}"


# =============================================================================
# Runner
# =============================================================================

class ExperimentRunner:
    """
    Runs the workflows of one experiment configuration.

    Args:
        config: Validated experiment configuration
        settings: Process settings (environment defaults when omitted)
        workers: Simulation processes, overriding the settings
    """

    def __init__(self, config: ExperimentConfig, settings: Optional[RunnerSettings] = None,
                 workers: Optional[int] = None):
        self.config = config
        self.settings = settings or RunnerSettings()
        self.workers = workers or self.settings.workers
        self.timings: Dict[str, float] = {}
        with self.stage("setup"):
            self.system = config.system.build()
            self.models: Dict[str, JlssModel] = {m.name: m.build(self.system) for m in config.models}
            x0_dist = config.x0.build(self.system.state_dim)
            if x0_dist.dim != self.system.state_dim:
                raise ConfigError(f"x0 has dimension {x0_dist.dim}, the system {self.system.state_dim}")
            self.sampler = ScenarioSampler(x0_dist, config.system.horizon, self.system.nu,
                                           config.system.step)
            self.spec = config.metric.build()
            self.tolerances = SolverTolerances().with_overrides(**config.optimization.tolerances)
        self.root = config.seeds.root

    # -------------------------------------------------------------------------
    # Plumbing
    # -------------------------------------------------------------------------

    @contextmanager
    def stage(self, name: str) -> Iterator[Any]:
        """Bind the stage name to log records, time the block and wrap toolkit errors."""
        log = logger.bind(stage=name)
        start = time.perf_counter()
        try:
            yield log
        except StageError:
            raise
        except ScenAbsError as e:
            log.error(f"{e.category}: {e.message}")
            raise StageError(name, e) from e
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - start

    def _report(self, command: str) -> ExperimentReport:
        seeds = {"root": self.root, "validation_root": validation_root(self.root)}
        if self.config.optimization.workflow is Workflow.DESIGN or command == "design":
            seeds["two_step_fresh_stream"] = 1
        return ExperimentReport(
            name=self.config.name,
            command=command,
            config=self.config.model_dump(mode="json"),
            seeds=seeds,
            include_timings=self.config.output.include_timings,
            timings=self.timings,
        )

    def model(self, name: str) -> JlssModel:
        if name not in self.models:
            raise ConfigError(f"unknown model '{name}'; configured: {sorted(self.models)}")
        return self.models[name]

    def parameter_count(self, model: JlssModel, design: bool = False) -> int:
        """
        Decision-variable count r of the configured parametrization.

        Raises:
            ConfigError: If the configured r override is below the derived count
        """
        opt = self.config.optimization
        n_basis = opt.basis.n_centers if opt.basis else 0
        n = self.system.state_dim
        if design:
            derived = design_parameter_count(opt.accuracy, model.state_dim, n, 1, n_basis)
        else:
            derived = accuracy_parameter_count(opt.accuracy, n, 1, n_basis)
        override = self.config.bounds.r
        if override is None:
            return derived
        if override < derived:
            raise ConfigError(
                f"r consistency check failed: r={override} is below the {derived} decision "
                f"variables of {opt.accuracy.value} accuracy" + (" with map design" if design else "")
            )
        return override

    def sample_size(self, alpha: float, r: int) -> int:
        """Implicit-bound N, or the configured override."""
        override = self.config.optimization.n_scenarios
        if override is not None:
            return override
        bounds = self.config.bounds
        return min_N_implicit(BoundParams(eps=bounds.eps, beta=bounds.beta, alpha=alpha, r=r))

    def basis(self) -> GaussianBasis:
        """Gaussian bumps centred on draws from the x0 distribution."""
        settings = self.config.optimization.basis
        rng = np.random.default_rng(derive_seed(self.root, BASIS_STREAM))
        centers = np.vstack([self.sampler.x0_dist.sample(rng) for _ in range(settings.n_centers)])
        return GaussianBasis.isotropic(centers, settings.width)

    def _provenance(self, root: Optional[int] = None) -> Dict[str, Any]:
        return {"eps": self.config.bounds.eps, "beta": self.config.bounds.beta,
                "root_seed": self.root if root is None else root}

    # -------------------------------------------------------------------------
    # Steps
    # -------------------------------------------------------------------------

    def assess_cell(self, model: JlssModel, alpha: float, root: Optional[int] = None
                    ) -> Tuple[ScenarioSolution, int]:
        """Steps 1-4 for one model at one alpha: N, scenarios, simulation, removal."""
        root = self.root if root is None else root
        opt = self.config.optimization
        with self.stage("bounds") as log:
            n = self.sample_size(alpha, self.parameter_count(model))
            log.info(f"{model.name} alpha={alpha:g}: N={n}")
        with self.stage("simulate"):
            x0s, squared = sample_squared_distances(self.system, model, self.sampler, root, n,
                                                    self.spec, self.workers, stream=TRAINING_STREAM)
        distances = np.sqrt(squared)
        with self.stage("optimize") as log:
            provenance = self._provenance(root)
            if opt.accuracy is AccuracyKind.SCALAR:
                solution = assess_scalar(distances, alpha, **provenance)
            elif opt.accuracy is AccuracyKind.QUADRATIC_PER_MODE:
                solution = assess_quadratic(
                    x0s, distances, alpha, MomentData.from_distribution(self.sampler.x0_dist),
                    rule=opt.rule(alpha), seed=root, tolerances=self.tolerances,
                    workers=self.workers, **provenance,
                )
            else:
                solution = assess_basis(
                    x0s, distances, alpha, self.basis(), self.sampler.x0_dist,
                    rule=opt.rule(alpha), seed=root, tolerances=self.tolerances,
                    workers=self.workers, **provenance,
                )
            log.info(f"{model.name} alpha={alpha:g}: J={solution.objective:.6g}, "
                     f"removed {len(solution.removed)}")
        return solution, n

    def design_cell(self, model: JlssModel, alpha: float, root: Optional[int] = None
                    ) -> Tuple[ScenarioSolution, int]:
        """Steps 1-5 with the initialization map as a decision variable."""
        root = self.root if root is None else root
        opt = self.config.optimization
        with self.stage("bounds") as log:
            n = self.sample_size(alpha, self.parameter_count(model, design=True))
            log.info(f"{model.name} design alpha={alpha:g}: N={n}")
        with self.stage("simulate"):
            scenarios = self.sampler.batch(root, n, stream=TRAINING_STREAM)
            data = simulate_design_data(self.system, model, scenarios, self.workers)
        with self.stage("optimize") as log:
            moments = (MomentData.from_distribution(self.sampler.x0_dist)
                       if opt.accuracy is AccuracyKind.QUADRATIC_PER_MODE else None)
            solution = design_init_map(
                [d[0] for d in data], [d[1] for d in data], np.vstack([s.x0 for s in scenarios]),
                alpha, model.C, opt.accuracy, moments, opt.rule(alpha), root,
                self.tolerances, self.workers, **self._provenance(root),
            )
            log.info(f"{model.name} design alpha={alpha:g}: J={solution.objective:.6g}")
        return solution, n

    def two_step_cell(self, model: JlssModel, root: Optional[int] = None) -> Tuple[ScenarioSolution, int]:
        """Design at alpha1, re-assess at alpha2 on fresh scenarios."""
        root = self.root if root is None else root
        opt = self.config.optimization
        two_step = opt.two_step
        override = opt.n_scenarios
        with self.stage("optimize") as log:
            solution = two_step_design(
                self.system, model, self.sampler, self.spec, two_step.alpha1, two_step.alpha2,
                self.config.bounds.eps, self.config.bounds.beta, root, opt.accuracy,
                rules=(opt.rule(two_step.alpha1).value, opt.rule(two_step.alpha2).value),
                n_scenarios=(override, override), tolerances=self.tolerances, workers=self.workers,
            )
            log.info(f"{model.name} two-step: J={solution.objective:.6g} at alpha2={two_step.alpha2:g}")
        return solution, solution.meta.n_scenarios

    def validate_accuracy(self, accuracy: Any, model: JlssModel, report: ExperimentReport,
                          label: str) -> ViolationReport:
        """Estimate eps_hat and, when configured, the deviation histograms."""
        settings = self.config.validation
        with self.stage("validate"):
            violation = estimate_violation(accuracy, self.system, model, settings.m, self.root,
                                           self.sampler, self.spec, self.workers, settings.confidence)
            if settings.histogram is not None:
                h = settings.histogram
                histogram = deviation_histogram(accuracy, self.system, model, h.n_x0, h.n_w,
                                                self.root, h.bins, self.sampler, self.spec, self.workers)
                report.tables[f"{label}_hist_raw"] = histogram.raw_histogram
                report.tables[f"{label}_hist_normalized"] = histogram.normalized_histogram
                report.details.setdefault(label, {})["histogram_dropped"] = histogram.dropped
        return violation

    def _record(self, report: ExperimentReport, model: JlssModel, alpha: Optional[float],
                n: Optional[int], solution: Stored, started: float, validate: bool,
                validated_model: Optional[JlssModel] = None) -> ResultRow:
        label = cell_label(model.name, alpha)
        row = ResultRow(model=model.name, alpha=alpha, N=n,
                        J=float(solution.J if alpha is None else solution.objective))
        detail = report.details.setdefault(label, {})
        if validate:
            violation = self.validate_accuracy(
                solution if alpha is None else solution.accuracy,
                validated_model or model, report, label,
            )
            row.eps_hat, row.ci_lo, row.ci_hi = violation.eps_hat, violation.ci_low, violation.ci_high
            detail["validation"] = violation.to_dict()
        row.seconds = time.perf_counter() - started
        detail["solution"] = solution.to_dict()
        report.rows.append(row)
        report.artifacts[label] = solution
        return row

    # -------------------------------------------------------------------------
    # Workflows
    # -------------------------------------------------------------------------

    def run_assess(self, validate: bool = True, report: Optional[ExperimentReport] = None) -> ExperimentReport:
        """Randomized assessment of every model at every configured alpha."""
        report = report or self._report("assess")
        for model in self.models.values():
            for alpha in self.config.bounds.alphas:
                started = time.perf_counter()
                solution, n = self.assess_cell(model, alpha)
                self._record(report, model, alpha, n, solution, started, validate)
        return report

    def optimized_models(self) -> List[JlssModel]:
        """
        Models configured with ``init_map: "optimize"``.

        Raises:
            ConfigError: If no model has its initialization map optimized
        """
        names = [m.name for m in self.config.models if m.optimize_map]
        if not names:
            raise ConfigError("map design needs at least one model with init_map 'optimize'")
        return [self.models[name] for name in names]

    def run_design(self, validate: bool = True, repeats: int = 0) -> ExperimentReport:
        """
        Map design for every model with an optimized map; two-step when configured.

        Models with a fixed map are assessed at the same alpha so the
        report compares both.
        """
        report = self._report("design")
        two_step = self.config.optimization.two_step
        alpha = two_step.alpha2 if two_step is not None else self.config.bounds.alphas[0]
        optimized = {model.name for model in self.optimized_models()}
        for model in self.models.values():
            started = time.perf_counter()
            if model.name not in optimized:
                solution, n = self.assess_cell(model, alpha)
                self._record(report, model, alpha, n, solution, started, validate)
                continue
            if two_step is not None:
                solution, n = self.two_step_cell(model)
            else:
                solution, n = self.design_cell(model, alpha)
            designed = model.with_init_map(solution.design_params)
            self._record(report, model, alpha, n, solution, started, validate, designed)
        if repeats > 0:
            report.tables["design_study"] = self.design_study(repeats)
        return report

    def design_study(self, repeats: int) -> pd.DataFrame:
        """
        Rerun the design with fresh root seeds.

        Each row holds the designed accuracy of an optimized model next to
        the accuracy assessed with its fixed map on the same scenarios, at
        alpha (and, for two-step runs, at alpha2).
        """
        two_step = self.config.optimization.two_step
        alpha = self.config.bounds.alphas[0]
        models = self.optimized_models()
        records = []
        for k in range(repeats):
            root = derive_seed(self.root, REPEAT_STREAM, k)
            for model in models:
                record = {"repeat": k, "root_seed": root, "model": model.name}
                designed, _ = self.design_cell(model, two_step.alpha1 if two_step else alpha, root)
                fixed, _ = self.assess_cell(model, two_step.alpha1 if two_step else alpha, root)
                record["J_optimized"] = designed.objective
                record["J_fixed"] = fixed.objective
                if two_step is not None:
                    stepped, _ = self.two_step_cell(model, root)
                    fixed2, _ = self.assess_cell(model, two_step.alpha2, root)
                    record["J_two_step"] = stepped.objective
                    record["J_fixed_alpha2"] = fixed2.objective
                records.append(record)
                logger.bind(stage="design_study").info(
                    f"repeat {k + 1}/{repeats} {model.name}: optimized {record['J_optimized']:.6g} "
                    f"vs fixed {record['J_fixed']:.6g}"
                )
        return pd.DataFrame.from_records(records)

    def run_bisim(self, validate: bool = True, report: Optional[ExperimentReport] = None) -> ExperimentReport:
        """Bi-simulation certificate for every model."""
        report = report or self._report("bisim")
        for model in self.models.values():
            started = time.perf_counter()
            with self.stage("bisim") as log:
                certificate = solve_bisim_sdp(self.system, model, None, self.sampler.x0_dist,
                                              self.config.bounds.eps, self.tolerances)
                log.info(f"{model.name}: J={certificate.J:.6g}")
            self._record(report, model, None, None, certificate, started, validate)
        return report

    def run_table1(self, validate: bool = True) -> ExperimentReport:
        """Every randomized cell plus the bi-simulation column."""
        report = self._report("table1")
        self.run_assess(validate, report)
        self.run_bisim(validate, report)
        return report

    def run_validate(self, result: Stored, model_name: str) -> ExperimentReport:
        """Validate a stored solution or certificate against a configured model."""
        report = self._report("validate")
        model = self.model(model_name)
        started = time.perf_counter()
        if isinstance(result, ScenarioSolution):
            if result.design_params is not None:
                model = model.with_init_map(result.design_params)
            self._record(report, model, result.meta.alpha, result.meta.n_scenarios, result,
                         started, True)
        else:
            self._record(report, model, None, None, result, started, True)
        report.artifacts.clear()
        return report

    def run_simulate(self, count: int) -> ExperimentReport:
        """Dump system and model outputs on the first ``count`` training scenarios."""
        if count < 1:
            raise ConfigError(f"count must be >= 1, got {count}")
        report = self._report("simulate")
        frames = []
        with self.stage("simulate"):
            for index, scenario in enumerate(self.sampler.batch(self.root, count, TRAINING_STREAM)):
                frame = simulate(self.system, scenario).to_frame(prefix="S_y")
                jumps = frame.pop("S_y_mode")
                for model in self.models.values():
                    model_frame = simulate(model, scenario).to_frame(prefix=f"{model.name}_y")
                    frame = frame.join(model_frame.drop(columns=["t", f"{model.name}_y_mode"]))
                frame.insert(0, "scenario", index)
                frame["jumps"] = jumps
                frames.append(frame)
        report.tables["trajectories"] = pd.concat(frames, ignore_index=True)
        return report
