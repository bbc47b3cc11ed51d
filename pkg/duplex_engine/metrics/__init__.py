"""Duplex metrics and report formatting."""

from duplex_engine.metrics.duplex import (  # noqa: F401
    interruption_prf,
    latency_report,
    overall_f1,
    pooled_f1,
    safe_prf,
    turn_taking_success,
)
