"""Turn-taking, barge-in and latency metrics computed from transcripts alone."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.metrics import confusion_matrix

from duplex_engine.errors import MetricUndefinedError
from duplex_engine.schemas.config import Tolerances
from duplex_engine.schemas.report import PRF, LatencyStats, LatencySummary
from duplex_engine.schemas.scenario import EventLabel, Setting
from duplex_engine.schemas.transcript import JudgedEvent, Transcript
from duplex_engine.timebase import State

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True, slots=True)
class TurnTakingJudgment:
    scenario_id: str
    utterance_end_ms: int
    speak_onset_ms: int | None
    success: bool
    latency_ms: int | None


@dataclass(frozen=True, slots=True)
class InterruptJudgment:
    """Whether the assistant stopped for one judged event.

    Attributes:
        scenario_id: Conversation the event belongs to.
        positive: True for a true barge-in.
        stopped: A Speaking->Listening transition happened within the decision window.
        decision_latency_blocks: Blocks from the onset block to the stopping block.
        setting: Judged setting of the conversation.
        label: Event label.
        latency_ms: End of the stopping block minus the event onset.
    """

    scenario_id: str
    positive: bool
    stopped: bool
    decision_latency_blocks: int | None
    setting: Setting
    label: EventLabel
    latency_ms: int | None = None


def _speech_onset(transcript: Transcript) -> int | None:
    starts = transcript.playback_events("speech_start")
    return starts[0].ms if starts else None


def judge_turn_taking(transcript: Transcript, tolerances: Tolerances = DEFAULT_TOLERANCES) -> TurnTakingJudgment:
    """Judge one conversation: onset must lie in ``(end - early_tol, end + late_tol]``.

    Raises:
        MetricUndefinedError: The transcript does not carry exactly one turn end.
    """
    ends = transcript.header.turn_ends_ms
    if len(ends) != 1:
        raise MetricUndefinedError(
            f"{transcript.header.scenario_id}: turn-taking needs exactly one turn end, found {len(ends)}"
        )
    end = ends[0]
    onset = _speech_onset(transcript)
    success = onset is not None and end - tolerances.early_tol_ms < onset <= end + tolerances.late_tol_ms
    return TurnTakingJudgment(
        scenario_id=transcript.header.scenario_id,
        utterance_end_ms=end,
        speak_onset_ms=onset,
        success=success,
        latency_ms=onset - end if success and onset is not None else None,
    )


def turn_taking_success(
    transcripts: Sequence[Transcript],
    early_tol: int = DEFAULT_TOLERANCES.early_tol_ms,
    late_tol: int = DEFAULT_TOLERANCES.late_tol_ms,
) -> float:
    """Fraction of conversations whose speech onset falls inside the turn-taking window.

    Raises:
        MetricUndefinedError: No transcripts, or one without exactly one turn end.
    """
    if not transcripts:
        raise MetricUndefinedError("turn-taking success over an empty set of transcripts")
    tolerances = Tolerances(early_tol_ms=early_tol, late_tol_ms=late_tol)
    judgments = [judge_turn_taking(transcript, tolerances) for transcript in transcripts]
    return sum(judgment.success for judgment in judgments) / len(judgments)


def _stopping_block(transcript: Transcript, event: JudgedEvent, window_ms: int) -> int | None:
    block_ms = transcript.header.block_ms
    first = event.onset_ms // block_ms
    for record in transcript.records[first:]:
        if (record.block_index + 1) * block_ms - event.onset_ms > window_ms:
            return None
        if record.state is State.SPEAKING and record.state_after is State.LISTENING:
            return record.block_index
    return None


def judge_interrupts(
    transcript: Transcript, window_ms: int = DEFAULT_TOLERANCES.interrupt_window_ms
) -> list[InterruptJudgment]:
    """One judgment per judged event of the transcript."""
    out = []
    for event in transcript.header.judged_events:
        block = _stopping_block(transcript, event, window_ms)
        first = event.onset_ms // transcript.header.block_ms
        out.append(
            InterruptJudgment(
                scenario_id=transcript.header.scenario_id,
                positive=event.positive,
                stopped=block is not None,
                decision_latency_blocks=None if block is None else block - first,
                setting=event.setting,
                label=event.label,
                latency_ms=None if block is None else (block + 1) * transcript.header.block_ms - event.onset_ms,
            )
        )
    return out


def confusion_counts(judgments: Sequence[InterruptJudgment]) -> tuple[int, int, int, int]:
    """(tp, fp, fn, tn) with "stopped" as the predicted positive class."""
    if not judgments:
        return 0, 0, 0, 0
    y_true = [int(j.positive) for j in judgments]
    y_pred = [int(j.stopped) for j in judgments]
    tn, fp, fn, tp = confusion_matrix(y_true, y_pred, labels=[0, 1]).ravel()
    return int(tp), int(fp), int(fn), int(tn)


def prf_from_counts(tp: int, fp: int, fn: int, tn: int = 0) -> PRF:
    """Precision, recall and F1 of confusion counts.

    Raises:
        MetricUndefinedError: A zero denominator.
    """
    if tp + fp == 0:
        raise MetricUndefinedError(f"precision undefined: no predicted positives (tp={tp}, fp={fp})")
    if tp + fn == 0:
        raise MetricUndefinedError(f"recall undefined: no positives (tp={tp}, fn={fn})")
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    if precision + recall == 0:
        raise MetricUndefinedError("F1 undefined: precision and recall are both zero")
    f1 = 2 * precision * recall / (precision + recall)
    return PRF(precision=precision, recall=recall, f1=f1, tp=tp, fp=fp, fn=fn, tn=tn)


def interruption_prf(judgments: Sequence[InterruptJudgment]) -> PRF:
    """Precision / recall / F1 of stopping decisions.

    Raises:
        MetricUndefinedError: No positives or no predicted positives.
    """
    return prf_from_counts(*confusion_counts(judgments))


def safe_prf(judgments: Sequence[InterruptJudgment]) -> PRF:
    """Like ``interruption_prf`` but records the reason instead of raising."""
    tp, fp, fn, tn = confusion_counts(judgments)
    try:
        return prf_from_counts(tp, fp, fn, tn)
    except MetricUndefinedError as exc:
        logger.warning("Metric undefined: %s", exc)
        return PRF(tp=tp, fp=fp, fn=fn, tn=tn, reason=str(exc))


def overall_f1(f1_independent: float, f1_dependent: float) -> float:
    """Arithmetic mean of the two per-setting F1 scores.

    Raises:
        ValueError: A score outside [0, 1].
    """
    for name, value in (("independent", f1_independent), ("dependent", f1_dependent)):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"{name} F1 must lie in [0, 1], got {value}")
    return (f1_independent + f1_dependent) / 2


def pooled_f1(counts_independent: PRF, counts_dependent: PRF) -> float:
    """F1 of the summed confusion counts of both settings.

    Raises:
        MetricUndefinedError: The pooled counts have a zero denominator.
    """
    pooled = prf_from_counts(
        counts_independent.tp + counts_dependent.tp,
        counts_independent.fp + counts_dependent.fp,
        counts_independent.fn + counts_dependent.fn,
    )
    return float(pooled.f1)


def backchannel_continue_rate(judgments: Iterable[InterruptJudgment]) -> float | None:
    """Share of backchannels the assistant talked through; None without backchannels."""
    backchannels = [j for j in judgments if j.label is EventLabel.BACKCHANNEL]
    if not backchannels:
        return None
    return sum(not j.stopped for j in backchannels) / len(backchannels)


def _stats(values: Sequence[int], excluded: int) -> LatencyStats:
    if not values:
        return LatencyStats(count=0, excluded=excluded)
    arr = np.asarray(values, dtype=float)
    return LatencyStats(
        count=len(values),
        excluded=excluded,
        mean_ms=float(arr.mean()),
        p50_ms=float(np.percentile(arr, 50, method="lower")),
        p95_ms=float(np.percentile(arr, 95, method="lower")),
    )


def latency_report(
    transcripts: Sequence[Transcript], tolerances: Tolerances = DEFAULT_TOLERANCES
) -> LatencySummary:
    """Latency distributions over successful judgments only.

    Turn-taking latency is speech onset minus turn end; interrupt latency is the
    end of the stopping block minus the barge-in onset. Conversations that are
    not judged successful (or have no single turn end) count as excluded.
    """
    turn: list[int] = []
    turn_excluded = 0
    interrupt: list[int] = []
    interrupt_excluded = 0
    for transcript in transcripts:
        if len(transcript.header.turn_ends_ms) == 1:
            judgment = judge_turn_taking(transcript, tolerances)
            if judgment.latency_ms is not None:
                turn.append(judgment.latency_ms)
            else:
                turn_excluded += 1
        else:
            turn_excluded += 1
        for judgment in judge_interrupts(transcript, tolerances.interrupt_window_ms):
            if not judgment.positive:
                continue
            if judgment.latency_ms is not None:
                interrupt.append(judgment.latency_ms)
            else:
                interrupt_excluded += 1
    return LatencySummary(turn_taking=_stats(turn, turn_excluded), interrupt=_stats(interrupt, interrupt_excluded))
