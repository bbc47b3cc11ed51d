"""Report rows and aligned-column plain-text tables."""

from __future__ import annotations

import logging
from typing import Any, Sequence

from duplex_engine.errors import MetricUndefinedError
from duplex_engine.metrics.duplex import (
    DEFAULT_TOLERANCES,
    backchannel_continue_rate,
    judge_interrupts,
    judge_turn_taking,
    overall_f1,
    pooled_f1,
    safe_prf,
)
from duplex_engine.schemas.config import Tolerances
from duplex_engine.schemas.model import TrainingLogRow
from duplex_engine.schemas.report import PRF, EvalReport, LatencySummary, ReportRow
from duplex_engine.schemas.scenario import Setting
from duplex_engine.schemas.transcript import Transcript

logger = logging.getLogger(__name__)


def build_row(
    transcripts: Sequence[Transcript], echo_factor: float, tolerances: Tolerances = DEFAULT_TOLERANCES
) -> ReportRow:
    """Metrics of one suite run. Undefined values are left empty with the reason logged."""
    judged_turns = [t for t in transcripts if len(t.header.turn_ends_ms) == 1]
    turn_rate = None
    if judged_turns:
        successes = sum(judge_turn_taking(t, tolerances).success for t in judged_turns)
        turn_rate = successes / len(judged_turns)
    judgments = [j for t in transcripts for j in judge_interrupts(t, tolerances.interrupt_window_ms)]
    independent = safe_prf([j for j in judgments if j.setting is Setting.INDEPENDENT])
    dependent = safe_prf([j for j in judgments if j.setting is Setting.DEPENDENT])
    overall = None
    if independent.f1 is not None and dependent.f1 is not None:
        overall = overall_f1(independent.f1, dependent.f1)
    try:
        pooled = pooled_f1(independent, dependent)
    except MetricUndefinedError as exc:
        logger.warning("Pooled F1 undefined: %s", exc)
        pooled = None
    return ReportRow(
        echo_factor=echo_factor,
        conversations=len(transcripts),
        turn_taking_success=turn_rate,
        independent=independent,
        dependent=dependent,
        overall_f1=overall,
        pooled_f1=pooled,
        backchannel_continue_rate=backchannel_continue_rate(judgments),
        violations=sum(t.violations for t in transcripts),
    )


def _pooled_prf(row: ReportRow) -> PRF:
    return PRF(
        tp=row.independent.tp + row.dependent.tp,
        fp=row.independent.fp + row.dependent.fp,
        fn=row.independent.fn + row.dependent.fn,
    )


def echo_sweep_rows(rows: Sequence[ReportRow]) -> list[dict[str, Any]]:
    """One (echo factor, precision, recall, F1) row per evaluated echo factor, over both barge-in settings."""
    out = []
    for row in rows:
        counts = _pooled_prf(row)
        predicted = counts.tp + counts.fp
        actual = counts.tp + counts.fn
        precision = counts.tp / predicted if predicted else None
        recall = counts.tp / actual if actual else None
        out.append(
            {
                "echo_factor": row.echo_factor,
                "precision": precision,
                "recall": recall,
                "f1": row.pooled_f1,
            }
        )
    return out


def _cell(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.3f}"
    return str(value)


def format_table(rows: Sequence[dict[str, Any]], columns: Sequence[str] | None = None) -> str:
    """Aligned-column plain text; ``None`` renders as "-"."""
    if not rows:
        return ""
    columns = list(columns or rows[0].keys())
    cells = [[_cell(row.get(column)) for column in columns] for row in rows]
    widths = [max(len(column), *(len(line[i]) for line in cells)) for i, column in enumerate(columns)]
    lines = ["  ".join(column.ljust(width) for column, width in zip(columns, widths)).rstrip()]
    lines.append("  ".join("-" * width for width in widths))
    for line in cells:
        lines.append("  ".join(cell.rjust(width) for cell, width in zip(line, widths)).rstrip())
    return "\n".join(lines) + "\n"


def summary_rows(rows: Sequence[ReportRow]) -> list[dict[str, Any]]:
    return [
        {
            "echo": row.echo_factor,
            "n": row.conversations,
            "turn_taking": row.turn_taking_success,
            "indep_P": row.independent.precision,
            "indep_R": row.independent.recall,
            "indep_F1": row.independent.f1,
            "dep_P": row.dependent.precision,
            "dep_R": row.dependent.recall,
            "dep_F1": row.dependent.f1,
            "overall_F1": row.overall_f1,
            "pooled_F1": row.pooled_f1,
            "backchannel_continue": row.backchannel_continue_rate,
            "violations": row.violations,
        }
        for row in rows
    ]


def latency_rows(summary: LatencySummary) -> list[dict[str, Any]]:
    return [
        {"latency": name, **stats.model_dump()}
        for name, stats in (("turn_taking", summary.turn_taking), ("interrupt", summary.interrupt))
    ]


def format_report(report: EvalReport) -> str:
    """Plain-text rendering of an evaluation report."""
    tolerances = ", ".join(f"{key}={value}" for key, value in sorted(report.tolerances.items()))
    parts = [
        f"policy: {report.policy}",
        f"engine: {report.engine_version}  config: {report.config_hash[:12]}",
        f"tolerances: {tolerances}",
        "",
        format_table(summary_rows(report.rows)),
    ]
    if len(report.rows) > 1:
        parts += ["echo sweep (both barge-in settings pooled)", format_table(echo_sweep_rows(report.rows))]
    parts += [
        f"latency (p50 = {report.latency.median_convention} median)",
        format_table(latency_rows(report.latency)),
    ]
    return "\n".join(parts)


def training_log_table(rows: Sequence[TrainingLogRow]) -> str:
    """Step-indexed monitor table (step, independent F1, dependent F1, overall F1, precision, recall)."""
    columns = ["step", "loss", "independent_f1", "dependent_f1", "overall_f1", "precision", "recall"]
    return format_table([row.model_dump() for row in rows], columns)
