"""
Logging Setup Module.

Installs the loguru sinks used by the experiment runner: a readable
console sink and, optionally, a JSON-lines file sink.
"""

import os
import sys
from typing import Optional

from loguru import logger


CONSOLE_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<cyan>{extra[stage]}</cyan> | {message}"
)


def configure_logging(level: str = "INFO", log_file: Optional[str] = None) -> None:
    """
    Replace the default loguru sink with the toolkit sinks.

    Args:
        level: Minimum level for both sinks
        log_file: Optional path of a JSON-lines log file; its directory is created
    """
    logger.remove()
    logger.configure(extra={"stage": "-"})
    logger.add(sys.stderr, level=level.upper(), format=CONSOLE_FORMAT, colorize=None)

    if log_file:
        try:
            log_dir = os.path.dirname(log_file)
            if log_dir:
                os.makedirs(log_dir, exist_ok=True)
            logger.add(log_file, level=level.upper(), serialize=True, enqueue=True)
        except OSError as e:
            logger.warning(f"Could not create log file sink {log_file}: {e}")
