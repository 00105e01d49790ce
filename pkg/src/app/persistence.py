"""
Persistence Module.

JSON documents for scenario solutions and bi-simulation certificates, so a
design can be validated or re-assessed in a later invocation.
"""

import json
from pathlib import Path
from typing import Any, Dict, Union

from loguru import logger

from src.optimization.scenario_opt import ScenarioSolution
from src.utils.errors import ConfigError
from src.verification.bisimulation import BisimCertificate


SOLUTION_KIND = "scenario_solution"
CERTIFICATE_KIND = "bisim_certificate"
FORMAT_VERSION = 1

Stored = Union[ScenarioSolution, BisimCertificate]


def write_json(path: Union[str, Path], document: Dict[str, Any]) -> Path:
    """Write a JSON document, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(document, f, indent=2, allow_nan=True)
        f.write("\n")
    return path


def read_json(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Read a JSON document.

    Raises:
        ConfigError: If the file is missing or not valid JSON
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"file not found: {path}")
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from None


def save_result(result: Stored, path: Union[str, Path]) -> Path:
    """Persist a ScenarioSolution or BisimCertificate with a kind tag."""
    kind = CERTIFICATE_KIND if isinstance(result, BisimCertificate) else SOLUTION_KIND
    path = write_json(path, {"kind": kind, "version": FORMAT_VERSION, "payload": result.to_dict()})
    logger.debug(f"saved {kind} to {path}")
    return path


def load_result(path: Union[str, Path]) -> Stored:
    """
    Load a document written by save_result.

    Raises:
        ConfigError: On an unknown kind or version
    """
    document = read_json(path)
    kind = document.get("kind")
    if document.get("version") != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported format version {document.get('version')}")
    try:
        if kind == SOLUTION_KIND:
            return ScenarioSolution.from_dict(document["payload"])
        if kind == CERTIFICATE_KIND:
            return BisimCertificate.from_dict(document["payload"])
    except (KeyError, TypeError) as e:
        raise ConfigError(f"{path}: malformed {kind} document ({e})") from None
    raise ConfigError(f"{path}: unknown document kind '{kind}'")
