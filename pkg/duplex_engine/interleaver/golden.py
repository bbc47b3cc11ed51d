"""Golden layout files and full sequence persistence (JSONL).

A layout file records, per item, its kind, block, token and loss weight (and
for embeddings, the slot) under a schema-versioned header line. Full sequence
files use the same shape and add the vectors and the frames behind them.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict

from duplex_engine.encoder.frontend import FeatureVector
from duplex_engine.errors import ArtifactError
from duplex_engine.interleaver.labels import LabelEvents, ResponseSpan, TransitionMark, UtteranceSpan
from duplex_engine.interleaver.sequence import InterleavedSequence, SlotItem, SlotKind
from duplex_engine.schemas.artifact import SCHEMA_VERSION, read_jsonl, write_jsonl
from duplex_engine.schemas.scenario import Direction
from duplex_engine.schemas.timing import TimingConfig
from duplex_engine.timebase import Frame, Speaker, StrategyKind, TimeBlock, Token


class SequenceHeader(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: str = SCHEMA_VERSION
    artifact: Literal["interleaved_sequence"] = "interleaved_sequence"
    strategy: StrategyKind
    blocks: int
    layout_only: bool


def layout_row(item: SlotItem) -> dict[str, Any]:
    row: dict[str, Any] = {
        "block": item.block_index,
        "kind": item.kind.value,
        "slot": None,
        "token": None,
        "token_block": None,
        "weight": None,
    }
    if item.kind in (SlotKind.ENV_EMBEDDING, SlotKind.ASST_EMBEDDING):
        row["slot"] = item.slot
    else:
        row["token"] = item.token.label
        row["token_block"] = item.token.block_index
    if item.kind is SlotKind.TOKEN_LABEL:
        row["weight"] = item.loss_weight
    return row


def layout_rows(seq: InterleavedSequence) -> list[dict[str, Any]]:
    return [layout_row(item) for item in seq.items]


def _block_count(seq: InterleavedSequence) -> int:
    return len(seq.labels())


def write_layout(path: Path | str, seq: InterleavedSequence) -> Path:
    header = SequenceHeader(strategy=seq.strategy, blocks=_block_count(seq), layout_only=True)
    return write_jsonl(path, header, layout_rows(seq))


def read_layout(path: Path | str) -> tuple[SequenceHeader, list[dict[str, Any]]]:
    raw_header, rows = read_jsonl(path, "interleaved_sequence")
    return SequenceHeader.model_validate(raw_header), rows


def _frame_to_dict(frame: Frame) -> dict[str, Any]:
    return {
        "t": frame.t_index,
        "activity": frame.activity,
        "speaker": frame.speaker.value,
        "relevance": frame.relevance,
        "energy": frame.energy,
        "echo_energy": frame.echo_energy,
    }


def _frame_from_dict(data: dict[str, Any]) -> Frame:
    return Frame(
        t_index=int(data["t"]),
        activity=float(data["activity"]),
        speaker=Speaker(data["speaker"]),
        relevance=float(data["relevance"]),
        energy=float(data["energy"]),
        echo_energy=float(data["echo_energy"]),
    )


def write_sequence(path: Path | str, seq: InterleavedSequence) -> Path:
    """Write a full sequence, vectors and provenance frames included."""
    rows = []
    for item in seq.items:
        row = layout_row(item)
        if item.kind in (SlotKind.ENV_EMBEDDING, SlotKind.ASST_EMBEDDING):
            vector = item.vector
            row["values"] = [float(v) for v in vector.values]
            row["frames"] = [_frame_to_dict(frame) for frame in vector.source]
            row["padded"] = vector.padded
        else:
            row["loss_weight"] = item.loss_weight
        rows.append(row)
    header = SequenceHeader(strategy=seq.strategy, blocks=_block_count(seq), layout_only=False)
    return write_jsonl(path, header, rows)


def read_sequence(path: Path | str) -> InterleavedSequence:
    """Inverse of ``write_sequence``."""
    header, rows = read_layout(path)
    if header.layout_only:
        raise ArtifactError(path, "layout-only file has no payloads")
    items: list[SlotItem] = []
    try:
        for row in rows:
            kind = SlotKind(row["kind"])
            if kind in (SlotKind.ENV_EMBEDDING, SlotKind.ASST_EMBEDDING):
                payload: FeatureVector | Token = FeatureVector(
                    values=np.asarray(row["values"], dtype=float),
                    source=tuple(_frame_from_dict(frame) for frame in row["frames"]),
                    padded=bool(row["padded"]),
                )
                items.append(SlotItem(kind, payload, int(row["block"]), slot=int(row["slot"])))
            else:
                payload = Token.parse(row["token"], int(row["token_block"]))
                items.append(SlotItem(kind, payload, int(row["block"]), loss_weight=float(row["loss_weight"])))
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactError(path, f"malformed sequence row: {exc}") from exc
    return InterleavedSequence(items=items, strategy=header.strategy)


GOLDEN_UTTERANCE = (7, 8)
GOLDEN_RESPONSE = (20, 21)


def golden_dialogue(timing: TimingConfig | None = None) -> tuple[list[TimeBlock], LabelEvents]:
    """The six-block reference dialogue.

    The user speaks in blocks 0-1, the assistant takes the turn in block 2,
    says two text tokens in blocks 3-4 and hands the turn back in block 5.
    """
    timing = timing or TimingConfig()
    fpb = timing.frames_per_block
    blocks: list[TimeBlock] = []
    for k in range(6):
        env: list[Frame] = []
        asst: list[Frame] = []
        for j in range(fpb):
            t = k * fpb + j
            if k < 2:
                env.append(Frame(t, activity=1.0, speaker=Speaker.USER, relevance=0.9, energy=0.8))
            else:
                env.append(Frame.silent(t))
            if k >= 4:
                asst.append(Frame(t, activity=1.0, speaker=Speaker.ASSISTANT, energy=0.8))
            else:
                asst.append(Frame.silent(t))
        blocks.append(TimeBlock(k, tuple(env), tuple(asst), frames_per_block=fpb))
    events = LabelEvents(
        utterances=(UtteranceSpan(0, GOLDEN_UTTERANCE),),
        transitions=(
            TransitionMark(2, Direction.TO_SPEAKING),
            TransitionMark(5, Direction.TO_LISTENING),
        ),
        responses=(ResponseSpan(3, GOLDEN_RESPONSE),),
    )
    return blocks, events
