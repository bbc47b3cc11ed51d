"""Central logging configuration for the project."""

from __future__ import annotations

import logging
from pathlib import Path

from duplex_engine.config import LOG_FILE, LOG_LEVEL


def configure_logging(log_file: Path | None = None, level: str | None = None) -> None:
    """Configure root logging to write to the project log file only.

    Args:
        log_file: Optional override for the log destination.
        level: Optional override for the root level name (e.g. "DEBUG").
    """
    root_logger = logging.getLogger()

    # Drop stream handlers so command output and the console live line stay clean.
    for handler in list(root_logger.handlers):
        root_logger.removeHandler(handler)

    target = Path(log_file) if log_file is not None else LOG_FILE
    target.parent.mkdir(parents=True, exist_ok=True)
    file_handler = logging.FileHandler(target, encoding="utf-8")
    formatter = logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
    file_handler.setFormatter(formatter)

    root_logger.addHandler(file_handler)
    root_logger.setLevel(getattr(logging, (level or LOG_LEVEL), logging.INFO))
