"""Ground-truth policy used as the harness upper bound and as the data source for training."""

from __future__ import annotations

from dataclasses import dataclass, field

from duplex_engine.errors import LabelError
from duplex_engine.interleaver.labels import LabelEvents, ResponseSpan, TransitionMark, UtteranceSpan
from duplex_engine.policy.features import BlockFeatures
from duplex_engine.policy.model import PolicyAction
from duplex_engine.schemas.scenario import Direction


def _spans(symbols: dict[int, int], cls: type) -> tuple:
    spans = []
    current: list[int] = []
    start = None
    for block in sorted(symbols):
        if start is not None and block == start + len(current):
            current.append(symbols[block])
            continue
        if start is not None:
            spans.append(cls(start, tuple(current)))
        start, current = block, [symbols[block]]
    if start is not None:
        spans.append(cls(start, tuple(current)))
    return tuple(spans)


@dataclass(slots=True)
class GroundTruthPlan:
    """Ideal behaviour for one scenario under one timing config.

    Attributes:
        transitions: Block -> direction of every ideal state change.
        response_symbols: Block -> reply text symbol for every ideal text block.
        utterance_symbols: Block -> transcript symbol of the dominant environment utterance.
        truncations: Blocks at which a reply is cut off by a barge-in.
        speech_end_ms: End of the last ideal audio, 0 when the assistant never speaks.
        end_ms: Latest instant the script or the ideal playback reaches.
    """

    transitions: dict[int, Direction] = field(default_factory=dict)
    response_symbols: dict[int, int] = field(default_factory=dict)
    utterance_symbols: dict[int, int] = field(default_factory=dict)
    truncations: list[int] = field(default_factory=list)
    speech_end_ms: int = 0
    end_ms: int = 0

    def label_events(self) -> LabelEvents:
        return LabelEvents(
            utterances=_spans(self.utterance_symbols, UtteranceSpan),
            transitions=tuple(
                TransitionMark(block, direction) for block, direction in sorted(self.transitions.items())
            ),
            responses=_spans(self.response_symbols, ResponseSpan),
        )

    def action_at(self, block_index: int, speaking: bool) -> PolicyAction:
        if block_index in self.transitions:
            return PolicyAction.SWITCH
        if speaking and block_index in self.response_symbols:
            return PolicyAction.TEXT
        return PolicyAction.STAY


def oracle_policy(features: BlockFeatures, plan: GroundTruthPlan | None) -> PolicyAction:
    """Perfect action for the block described by ``features``.

    Raises:
        LabelError: No ground-truth plan is available.
    """
    if plan is None:
        raise LabelError("the oracle policy needs ground-truth labels")
    return plan.action_at(features.block_index, features.speaking)


class OraclePolicy:
    """Policy wrapper around a plan; the plan can be refreshed when events are added."""

    name = "oracle"

    def __init__(self, plan: GroundTruthPlan | None, history: int = 8) -> None:
        self.plan = plan
        self.history = history

    def decide(self, features: BlockFeatures) -> PolicyAction:
        return oracle_policy(features, self.plan)

    def replan(self, plan: GroundTruthPlan) -> None:
        self.plan = plan
