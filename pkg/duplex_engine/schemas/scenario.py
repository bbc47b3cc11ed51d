"""Scenario scripts and suite manifests."""

from __future__ import annotations

from enum import Enum
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from duplex_engine.schemas.artifact import SCHEMA_VERSION


class EventKind(str, Enum):
    USER_UTTERANCE = "user_utterance"
    THIRD_PARTY_UTTERANCE = "third_party_utterance"
    BACKCHANNEL = "backchannel"
    SILENCE = "silence"


class EventLabel(str, Enum):
    TRUE_BARGE_IN = "true_barge_in"
    FALSE_BARGE_IN = "false_barge_in"
    BACKCHANNEL = "backchannel"
    TURN_END = "turn_end"
    NONE = "none"


class SuiteKind(str, Enum):
    TURN_TAKING = "turn-taking"
    BARGE_IN_INDEPENDENT = "barge-in-independent"
    BARGE_IN_DEPENDENT = "barge-in-dependent"
    BACKCHANNEL = "backchannel"
    MIXED = "mixed"


class Setting(str, Enum):
    TURN_TAKING = "turn_taking"
    INDEPENDENT = "independent"
    DEPENDENT = "dependent"
    BACKCHANNEL = "backchannel"


class Direction(str, Enum):
    TO_SPEAKING = "to_speaking"
    TO_LISTENING = "to_listening"


AUDIBLE_KINDS = frozenset(
    {EventKind.USER_UTTERANCE, EventKind.THIRD_PARTY_UTTERANCE, EventKind.BACKCHANNEL}
)


class ScenarioEvent(BaseModel):
    """One scripted event on the environment stream.

    Attributes:
        kind: What happens (utterance, backchannel, scripted silence).
        start_ms: Onset in milliseconds from the start of the conversation.
        duration_ms: Length of the event.
        relevance: Relatedness of the utterance to the ongoing dialogue.
        label: Ground-truth role of the event for the judged behaviour.
        energy: Loudness of the speaker while the event is audible.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: EventKind
    start_ms: int = Field(ge=0)
    duration_ms: int = Field(gt=0)
    relevance: float = Field(default=0.0, ge=0.0, le=1.0)
    label: EventLabel = EventLabel.NONE
    energy: float = Field(default=0.8, gt=0.0, le=1.0)

    @property
    def end_ms(self) -> int:
        return self.start_ms + self.duration_ms

    @property
    def audible(self) -> bool:
        return self.kind in AUDIBLE_KINDS

    @property
    def is_judged_interrupt(self) -> bool:
        return self.label in (
            EventLabel.TRUE_BARGE_IN,
            EventLabel.FALSE_BARGE_IN,
            EventLabel.BACKCHANNEL,
        ) or (self.kind is EventKind.SILENCE and self.label is EventLabel.NONE)


class ExpectedTransition(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    block_index: int = Field(ge=0)
    direction: Direction


class Scenario(BaseModel):
    """Declarative conversation script.

    Attributes:
        id: Stable identifier, unique within a suite.
        seed: Seed the scenario was generated from.
        kind: Suite kind that generated it.
        setting: Which judged behaviour the scenario exercises.
        events: Time-ordered environment events.
        echo_factor: Scale of the assistant's own speech heard in the environment.
        response_tokens: Length of the assistant's reply in text tokens.
        multi_speaker: Whether user and third-party speech may overlap.
        end_ms: Explicit end of the script (console sessions); None means derived.
        expected_transitions: Ideal state transitions under the generating timing.
    """

    model_config = ConfigDict(extra="forbid")

    schema_version: str = SCHEMA_VERSION
    artifact: Literal["scenario"] = "scenario"
    id: str = Field(min_length=1)
    seed: int = 0
    kind: SuiteKind = SuiteKind.TURN_TAKING
    setting: Setting = Setting.TURN_TAKING
    events: list[ScenarioEvent] = Field(default_factory=list)
    echo_factor: float = Field(default=1.0, ge=0.0)
    response_tokens: int = Field(default=12, ge=1)
    multi_speaker: bool = False
    end_ms: int | None = Field(default=None, ge=0)
    expected_transitions: list[ExpectedTransition] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_events(self) -> "Scenario":
        starts = [event.start_ms for event in self.events]
        if starts != sorted(starts):
            raise ValueError(f"scenario {self.id}: events are not time-ordered")
        if not self.multi_speaker:
            speech = [event for event in self.events if event.audible]
            for earlier, later in zip(speech, speech[1:]):
                if later.start_ms < earlier.end_ms:
                    raise ValueError(
                        f"scenario {self.id}: overlapping speech at {later.start_ms} ms "
                        "requires multi_speaker"
                    )
        return self

    @property
    def turn_ends(self) -> list[ScenarioEvent]:
        return [event for event in self.events if event.label is EventLabel.TURN_END]

    @property
    def turn_end(self) -> ScenarioEvent | None:
        ends = self.turn_ends
        return ends[0] if ends else None

    @property
    def events_end_ms(self) -> int:
        return max((event.end_ms for event in self.events), default=0)


class SuiteManifest(BaseModel):
    """Index of a generated suite directory."""

    model_config = ConfigDict(extra="forbid")

    schema_version: str = SCHEMA_VERSION
    artifact: Literal["suite_manifest"] = "suite_manifest"
    kind: SuiteKind
    count: int = Field(ge=1)
    seed: int
    echo_factor: float = Field(ge=0.0)
    scenario_ids: list[str]
    files: list[str]
    label_counts: dict[str, int] = Field(default_factory=dict)
    setting_counts: dict[str, int] = Field(default_factory=dict)
