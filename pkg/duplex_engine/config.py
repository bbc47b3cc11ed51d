"""Centralized process settings sourced from environment variables."""

from __future__ import annotations

import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()


def _get_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        return default


def _get_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return float(raw)
    except ValueError:
        return default


def _get_path(name: str, default: Path | None) -> Path | None:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    return Path(raw.strip()).expanduser()


PACKAGE_DIR = Path(__file__).resolve().parent

DEFAULT_CONFIG_PATH = _get_path("DUPLEX_CONFIG", None)
LOG_FILE = _get_path("DUPLEX_LOG_FILE", PACKAGE_DIR / "app.log")
LOG_LEVEL = os.getenv("DUPLEX_LOG_LEVEL", "INFO").upper()
DEFAULT_WORKERS = max(_get_int("DUPLEX_WORKERS", 1), 1)
CONSOLE_TICK_SCALE = _get_float("DUPLEX_CONSOLE_TICK_SCALE", 1.0)
