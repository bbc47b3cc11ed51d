"""Evaluation and latency report documents."""

from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field

from duplex_engine.schemas.artifact import SCHEMA_VERSION


class PRF(BaseModel):
    """Precision / recall / F1 triple; None when the metric is undefined."""

    model_config = ConfigDict(extra="forbid")

    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    reason: str | None = None


class LatencyStats(BaseModel):
    model_config = ConfigDict(extra="forbid")

    count: int = Field(ge=0)
    excluded: int = Field(default=0, ge=0)
    mean_ms: float | None = None
    p50_ms: float | None = None
    p95_ms: float | None = None


class LatencySummary(BaseModel):
    model_config = ConfigDict(extra="forbid")

    median_convention: str = "lower"
    turn_taking: LatencyStats
    interrupt: LatencyStats


class ReportRow(BaseModel):
    """Metrics of one evaluated suite run (one echo factor)."""

    model_config = ConfigDict(extra="forbid")

    echo_factor: float
    conversations: int
    turn_taking_success: float | None = None
    independent: PRF = Field(default_factory=PRF)
    dependent: PRF = Field(default_factory=PRF)
    overall_f1: float | None = None
    pooled_f1: float | None = None
    backchannel_continue_rate: float | None = None
    violations: int = 0


class EvalReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: str = SCHEMA_VERSION
    artifact: Literal["report"] = "report"
    engine_version: str
    policy: str
    config: dict[str, Any]
    config_hash: str
    tolerances: dict[str, int]
    suite_manifest_hash: str | None = None
    rows: list[ReportRow] = Field(default_factory=list)
    latency: LatencySummary


class LatencyReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: str = SCHEMA_VERSION
    artifact: Literal["latency_report"] = "latency_report"
    engine_version: str
    transcripts: int
    latency: LatencySummary
