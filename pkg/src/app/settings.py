"""
Runner Settings Module.

Process-level settings read from the environment (and a ``.env`` file when
present). Experiment parameters live in the configuration document instead.
"""

import os
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv

from src.utils.errors import ConfigError


ENV_PREFIX = "SCENABS_"


def _env(name: str, default: str) -> str:
    return os.getenv(f"{ENV_PREFIX}{name}", default)


@dataclass(frozen=True)
class RunnerSettings:
    """Output location, logging and parallelism defaults."""
    output_dir: str = "results"
    log_level: str = "INFO"
    log_file: Optional[str] = None
    workers: int = 1

    @classmethod
    def from_env(cls, dotenv_path: Optional[str] = None) -> "RunnerSettings":
        """
        Read SCENABS_* variables; values already in the environment win over ``.env``.

        Raises:
            ConfigError: If SCENABS_WORKERS is not a positive integer
        """
        load_dotenv(dotenv_path, override=False)
        raw_workers = _env("WORKERS", "1")
        try:
            workers = int(raw_workers)
        except ValueError:
            raise ConfigError(f"{ENV_PREFIX}WORKERS must be an integer, got '{raw_workers}'") from None
        if workers < 1:
            raise ConfigError(f"{ENV_PREFIX}WORKERS must be >= 1, got {workers}")
        return cls(
            output_dir=_env("OUTPUT_DIR", "results"),
            log_level=_env("LOG_LEVEL", "INFO").upper(),
            log_file=_env("LOG_FILE", "") or None,
            workers=workers,
        )
