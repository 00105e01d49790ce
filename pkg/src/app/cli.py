"""
Command-Line Interface.

Usage:
    python -m src.app.cli sample-size --eps 0.25 --beta 1e-10 --alpha 0.10 --r 28
    python -m src.app.cli assess data/configs/table1_m1.json
    python -m src.app.cli design data/configs/design_m1.json --two-step 0.10 0.22
    python -m src.app.cli bisim data/configs/table1.json
    python -m src.app.cli validate data/configs/table1_m1.json --solution results/table1_m1_M1_alpha0.1.json --model M1
    python -m src.app.cli table1 data/configs/table1.json

Exit codes: 0 success, 2 configuration or parameter error, 3 solver error,
4 dimension or simulation error, 5 other toolkit error, 1 unexpected failure.
"""

import argparse
import json
import os
import sys
from typing import Any, Dict, List, Optional

from loguru import logger
from pydantic import ValidationError

# Add project root to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from src.app.persistence import load_result, read_json
from src.app.runner import ExperimentReport, ExperimentRunner
from src.app.schemas import ExperimentConfig
from src.app.settings import RunnerSettings
from src.optimization.bounds import BoundParams, min_N_implicit, sample_size_table
from src.utils.errors import ConfigError, ScenAbsError
from src.utils.logging_config import configure_logging


# =============================================================================
# Configuration loading
# =============================================================================

def load_config(path: str, overrides: Optional[Dict[str, Dict[str, Any]]] = None) -> ExperimentConfig:
    """
    Read and validate an experiment configuration.

    Args:
        path: JSON configuration file
        overrides: Section-level values merged over the file before validation

    Raises:
        ConfigError: If the file is missing, malformed or fails validation
    """
    data = read_json(path)
    for section, values in (overrides or {}).items():
        merged = dict(data.get(section) or {})
        merged.update(values)
        data[section] = merged
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"invalid configuration {path}: {problems}") from None


# =============================================================================
# Argument parsing
# =============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenabs",
        description="Randomized accuracy assessment and design of abstracted JLSS models",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--output-dir", type=str, default=None,
                        help="Output directory (overrides config and SCENABS_OUTPUT_DIR)")
    parser.add_argument("--log-level", type=str, default=None, help="Log level (default SCENABS_LOG_LEVEL)")
    parser.add_argument("--log-file", type=str, default=None, help="JSON-lines log file")
    parser.add_argument("--workers", type=int, default=None, help="Simulation processes")
    sub = parser.add_subparsers(dest="command", required=True)

    size = sub.add_parser("sample-size", help="Print the implicit, Chernoff and VC sample sizes")
    size.add_argument("--eps", type=float, required=True)
    size.add_argument("--beta", type=float, required=True)
    size.add_argument("--alpha", type=float, default=0.0)
    size.add_argument("--r", type=int, default=None, help="Decision-variable count")
    size.add_argument("--d-vc", type=int, default=None, help="VC dimension")
    size.add_argument("--convention", choices=["first", "stable"], default="first",
                      help="Implicit-bound search convention")

    def with_config(name: str, help_text: str) -> argparse.ArgumentParser:
        command = sub.add_parser(name, help=help_text)
        command.add_argument("config", type=str, help="Experiment configuration (JSON)")
        command.add_argument("--seed", type=int, default=None, help="Override the root seed")
        command.add_argument("--n-scenarios", type=int, default=None, help="Override the bound-derived N")
        return command

    simulate = with_config("simulate", "Dump system and model trajectories")
    simulate.add_argument("--count", type=int, default=10)

    for name, help_text in (("assess", "Randomized accuracy assessment"),
                            ("bisim", "Bi-simulation baseline"),
                            ("table1", "All randomized cells plus the bi-simulation column")):
        command = with_config(name, help_text)
        command.add_argument("--no-validate", action="store_true", help="Skip out-of-sample validation")

    design = with_config("design", "Initialization map design")
    design.add_argument("--two-step", nargs=2, type=float, metavar=("ALPHA1", "ALPHA2"), default=None)
    design.add_argument("--repeats", type=int, default=0, help="Repeated design study with fresh seeds")
    design.add_argument("--no-validate", action="store_true", help="Skip out-of-sample validation")

    validate = with_config("validate", "Validate a saved solution or certificate")
    validate.add_argument("--solution", type=str, required=True)
    validate.add_argument("--model", type=str, required=True)
    validate.add_argument("--m", type=int, default=None, help="Fresh scenarios")

    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Dict[str, Any]]:
    overrides: Dict[str, Dict[str, Any]] = {}
    if args.seed is not None:
        overrides["seeds"] = {"root": args.seed}
    optimization: Dict[str, Any] = {}
    if args.n_scenarios is not None:
        optimization["n_scenarios"] = args.n_scenarios
    if getattr(args, "two_step", None):
        optimization["two_step"] = {"alpha1": args.two_step[0], "alpha2": args.two_step[1]}
    if args.command == "design":
        optimization["workflow"] = "design"
    if optimization:
        overrides["optimization"] = optimization
    if getattr(args, "m", None) is not None:
        overrides["validation"] = {"m": args.m}
    return overrides


# =============================================================================
# Commands
# =============================================================================

def run_sample_size(args: argparse.Namespace) -> Dict[str, Any]:
    params = BoundParams(eps=args.eps, beta=args.beta, alpha=args.alpha, r=args.r, d_vc=args.d_vc)
    table = sample_size_table(params)
    if params.r is not None and args.convention != "first":
        table["implicit"] = min_N_implicit(params, convention=args.convention)
    return {"params": params.to_dict(), "convention": args.convention, **table}


def run_command(args: argparse.Namespace, settings: RunnerSettings) -> ExperimentReport:
    config = load_config(args.config, _overrides(args))
    runner = ExperimentRunner(config, settings, workers=args.workers)
    validate = not getattr(args, "no_validate", False)
    if args.command == "simulate":
        return runner.run_simulate(args.count)
    if args.command == "assess":
        return runner.run_assess(validate)
    if args.command == "design":
        return runner.run_design(validate, repeats=args.repeats)
    if args.command == "bisim":
        return runner.run_bisim(validate)
    if args.command == "table1":
        return runner.run_table1(validate)
    return runner.run_validate(load_result(args.solution), args.model)


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    try:
        settings = RunnerSettings.from_env()
        configure_logging(args.log_level or settings.log_level, args.log_file or settings.log_file)
        if args.command == "sample-size":
            print(json.dumps(run_sample_size(args), indent=2))
            return 0
        report = run_command(args, settings)
        directory = args.output_dir or report.config["output"]["directory"] or settings.output_dir
        paths = report.write(directory)
        print(json.dumps({"report": str(paths["report"]), "results": report.frame().to_dict(orient="records")},
                         indent=2, default=str))
        return 0
    except ScenAbsError as e:
        logger.error(f"{e.category}: {e.message}")
        print(f"error [{e.category}]: {e.message}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception(f"unexpected failure: {e}")
        print(f"error [internal]: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
