"""Block-aligned execution log of one conversation."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from duplex_engine.schemas.artifact import SCHEMA_VERSION
from duplex_engine.schemas.scenario import EventLabel, Setting
from duplex_engine.timebase import State, StrategyKind

PlaybackKind = Literal["speech_start", "speech_chunk", "speech_end", "speech_truncated"]


class PlaybackEvent(BaseModel):
    """Synthesizer event stamped in wall-clock milliseconds."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: PlaybackKind
    ms: int = Field(ge=0)
    duration_ms: int | None = None


class JudgedEvent(BaseModel):
    """Event whose handling is scored by the interruption metrics."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    onset_ms: int = Field(ge=0)
    end_ms: int = Field(ge=0)
    label: EventLabel
    setting: Setting
    positive: bool


class BlockRecord(BaseModel):
    """Everything the engine did in one block.

    Attributes:
        block_index: Block position in the conversation.
        state: Dialogue state during the block.
        action: Policy action chosen at the end of the block.
        token: Label of the emitted token (e.g. "think", "text:1002").
        state_after: Dialogue state from the next block on.
        buffered_ms: Queued speech after this block's text was fed.
        playback: Synthesizer events generated in this block.
        features: Base feature vector the policy saw.
        violation: Whether the policy emitted text while listening.
    """

    model_config = ConfigDict(extra="forbid")

    block_index: int = Field(ge=0)
    state: State
    action: str
    token: str
    state_after: State
    buffered_ms: int = Field(ge=0)
    playback: list[PlaybackEvent] = Field(default_factory=list)
    features: list[float] = Field(default_factory=list)
    violation: bool = False


class TranscriptHeader(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: str = SCHEMA_VERSION
    artifact: Literal["transcript"] = "transcript"
    scenario_id: str
    config_hash: str
    strategy: StrategyKind
    policy: str
    block_ms: int = Field(gt=0)
    echo_factor: float = Field(ge=0.0)
    turn_ends_ms: list[int] = Field(default_factory=list)
    judged_events: list[JudgedEvent] = Field(default_factory=list)
    n_blocks: int = Field(ge=0)


class Transcript(BaseModel):
    """Header plus one record per block."""

    model_config = ConfigDict(extra="forbid")

    header: TranscriptHeader
    records: list[BlockRecord] = Field(default_factory=list)

    @property
    def duration_ms(self) -> int:
        return len(self.records) * self.header.block_ms

    @property
    def violations(self) -> int:
        return sum(1 for record in self.records if record.violation)

    def playback_events(self, kind: str | None = None) -> list[PlaybackEvent]:
        events = [event for record in self.records for event in record.playback]
        if kind is None:
            return events
        return [event for event in events if event.kind == kind]

    def shift_blocks(self) -> list[int]:
        return [record.block_index for record in self.records if record.state_after is not record.state]
