"""
Centralized logging setup.

Scripts and the CLI call setup_logging once; library modules only ever
ask for logging.getLogger(__name__).
"""

import logging
from pathlib import Path
from typing import Final


_LOG_FORMAT: Final[str] = (
    "%(asctime)s | %(levelname)s | %(name)s | %(message)s"
)


def setup_logging(level: str) -> None:
    """
    Configure root logging.

    Args:
        level: e.g. "DEBUG", "INFO", "WARNING"
    """
    numeric_level = getattr(logging, level.upper(), logging.INFO)

    logging.basicConfig(
        level=numeric_level,
        format=_LOG_FORMAT,
    )


def attach_file_log(path: Path) -> logging.Handler:
    """Mirror root logging into a run's log file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(path, encoding="utf-8")
    handler.setFormatter(logging.Formatter(_LOG_FORMAT))
    logging.getLogger().addHandler(handler)
    return handler
