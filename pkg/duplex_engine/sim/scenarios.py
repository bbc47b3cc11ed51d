"""Seeded scenario suites and the ideal behaviour of the engine on a scenario."""

from __future__ import annotations

import logging
import math
from collections import Counter

import numpy as np

from duplex_engine.policy.oracle import GroundTruthPlan
from duplex_engine.schemas.scenario import (
    Direction,
    EventKind,
    EventLabel,
    ExpectedTransition,
    Scenario,
    ScenarioEvent,
    Setting,
    SuiteKind,
)
from duplex_engine.schemas.timing import TimingConfig
from duplex_engine.sim.frames import response_symbol, utterance_symbol
from duplex_engine.synth.scheduler import (
    PlaybackState,
    advance_block,
    feed_text_token,
    finish_response,
    flush_on_interrupt,
)
from duplex_engine.timebase import Token, TokenKind, block_of_ms, last_block_before, onset_latency

logger = logging.getLogger(__name__)

SUITE_KINDS = tuple(SuiteKind)
MIXED_SHARES = (
    SuiteKind.TURN_TAKING,
    SuiteKind.BARGE_IN_INDEPENDENT,
    SuiteKind.BARGE_IN_DEPENDENT,
    SuiteKind.BACKCHANNEL,
)
_SETTINGS = {
    SuiteKind.TURN_TAKING: Setting.TURN_TAKING,
    SuiteKind.BARGE_IN_INDEPENDENT: Setting.INDEPENDENT,
    SuiteKind.BARGE_IN_DEPENDENT: Setting.DEPENDENT,
    SuiteKind.BACKCHANNEL: Setting.BACKCHANNEL,
}


def _aligned(rng: np.random.Generator, lo_ms: int, hi_ms: int, block_ms: int) -> int:
    return int(rng.integers(lo_ms // block_ms, hi_ms // block_ms + 1)) * block_ms


def _uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return round(float(rng.uniform(lo, hi)), 3)


def _question(rng: np.random.Generator, start_ms: int, block_ms: int) -> ScenarioEvent:
    return ScenarioEvent(
        kind=EventKind.USER_UTTERANCE,
        start_ms=start_ms,
        duration_ms=_aligned(rng, 800, 2000, block_ms),
        relevance=_uniform(rng, 0.7, 1.0),
        label=EventLabel.TURN_END,
        energy=_uniform(rng, 0.6, 1.0),
    )


def _turn_taking(rng: np.random.Generator, timing: TimingConfig, *, distractor: bool) -> dict:
    B = timing.block_ms
    lead = _aligned(rng, 160, 640, B)
    events = []
    if distractor:
        events.append(
            ScenarioEvent(
                kind=EventKind.THIRD_PARTY_UTTERANCE,
                start_ms=0,
                duration_ms=_aligned(rng, 320, 640, B),
                relevance=_uniform(rng, 0.0, 0.3),
                energy=_uniform(rng, 0.3, 0.55),
            )
        )
    events.append(_question(rng, lead, B))
    return {
        "events": events,
        "response_tokens": int(rng.integers(8, 25)),
        "multi_speaker": distractor,
    }


def _speech_start(question: ScenarioEvent, timing: TimingConfig) -> int:
    return question.end_ms + onset_latency(timing)


def _barge_in(
    rng: np.random.Generator, timing: TimingConfig, setting: Setting, positive: bool, variant: int
) -> dict:
    """A question, the assistant's reply, and one judged event during the reply."""
    B = timing.block_ms
    question = _question(rng, _aligned(rng, 160, 640, B), B)
    onset = _speech_start(question, timing) + _aligned(rng, 480, 1600, B)
    if setting is Setting.INDEPENDENT and positive:
        event = ScenarioEvent(
            kind=EventKind.USER_UTTERANCE if variant % 2 == 0 else EventKind.THIRD_PARTY_UTTERANCE,
            start_ms=onset,
            duration_ms=_aligned(rng, 480, 1200, B),
            relevance=_uniform(rng, 0.8, 1.0),
            label=EventLabel.TRUE_BARGE_IN,
            energy=_uniform(rng, 0.6, 1.0),
        )
    elif setting is Setting.INDEPENDENT:
        event = ScenarioEvent(
            kind=EventKind.BACKCHANNEL,
            start_ms=onset,
            duration_ms=_aligned(rng, 240, 480, B),
            relevance=_uniform(rng, 0.0, 0.2),
            label=EventLabel.BACKCHANNEL,
            energy=_uniform(rng, 0.4, 0.8),
        )
    elif positive:
        event = ScenarioEvent(
            kind=EventKind.USER_UTTERANCE if variant % 2 == 0 else EventKind.THIRD_PARTY_UTTERANCE,
            start_ms=onset,
            duration_ms=_aligned(rng, 640, 1600, B),
            relevance=_uniform(rng, 0.7, 1.0),
            label=EventLabel.TRUE_BARGE_IN,
            energy=_uniform(rng, 0.6, 1.0),
        )
    elif variant % 2 == 0:
        event = ScenarioEvent(
            kind=EventKind.THIRD_PARTY_UTTERANCE,
            start_ms=onset,
            duration_ms=_aligned(rng, 640, 1600, B),
            relevance=_uniform(rng, 0.0, 0.3),
            label=EventLabel.FALSE_BARGE_IN,
            energy=_uniform(rng, 0.6, 1.0),
        )
    else:
        event = ScenarioEvent(
            kind=EventKind.SILENCE,
            start_ms=onset,
            duration_ms=_aligned(rng, 480, 1200, B),
        )
    return {"events": [question, event], "response_tokens": int(rng.integers(40, 61)), "multi_speaker": False}


def _backchannel(rng: np.random.Generator, timing: TimingConfig) -> dict:
    B = timing.block_ms
    question = _question(rng, _aligned(rng, 160, 640, B), B)
    events = [question]
    start = _speech_start(question, timing) + _aligned(rng, 480, 1200, B)
    for _ in range(int(rng.integers(1, 3))):
        backchannel = ScenarioEvent(
            kind=EventKind.BACKCHANNEL,
            start_ms=start,
            duration_ms=_aligned(rng, 240, 480, B),
            relevance=_uniform(rng, 0.0, 0.2),
            label=EventLabel.BACKCHANNEL,
            energy=_uniform(rng, 0.4, 0.8),
        )
        events.append(backchannel)
        start = backchannel.end_ms + _aligned(rng, 400, 800, B)
    return {"events": events, "response_tokens": int(rng.integers(40, 61)), "multi_speaker": False}


def _member(
    kind: SuiteKind, rng: np.random.Generator, timing: TimingConfig, positive: bool, variant: int, *, mixed: bool
) -> dict:
    if kind is SuiteKind.TURN_TAKING:
        return _turn_taking(rng, timing, distractor=mixed)
    if kind is SuiteKind.BACKCHANNEL:
        return _backchannel(rng, timing)
    return _barge_in(rng, timing, _SETTINGS[kind], positive, variant)


def generate_suite(
    kind: SuiteKind | str,
    count: int,
    seed: int,
    *,
    timing: TimingConfig | None = None,
    echo_factor: float = 1.0,
) -> list[Scenario]:
    """Generate ``count`` scenarios of one suite kind, deterministic in ``seed``.

    Barge-in suites put ``count - count // 2`` positives first. Positives of
    both barge-in suites alternate user and third-party speakers. Negatives
    of the independent suite are backchannels; those of the dependent suite
    alternate low-relevance third-party questions and silence. Mixed suites cycle
    through turn-taking (with a distractor), both barge-in kinds and
    backchannels in equal shares.

    Raises:
        ValueError: Unknown kind or non-positive count.
    """
    kind = SuiteKind(kind)
    if count <= 0:
        raise ValueError(f"count must be positive, got {count}")
    timing = timing or TimingConfig()
    kind_idx = SUITE_KINDS.index(kind)
    n_pos = count - count // 2
    scenarios: list[Scenario] = []
    for i in range(count):
        rng = np.random.default_rng([seed, kind_idx, i])
        if kind is SuiteKind.MIXED:
            member_kind = MIXED_SHARES[i % len(MIXED_SHARES)]
            j = i // len(MIXED_SHARES)
            fields = _member(member_kind, rng, timing, j % 2 == 0, j // 2, mixed=True)
        else:
            member_kind = kind
            positive = i < n_pos
            variant = i if positive else i - n_pos
            fields = _member(member_kind, rng, timing, positive, variant, mixed=False)
        scenario = Scenario(
            id=f"{kind.value}-{i:05d}",
            seed=seed,
            kind=kind,
            setting=_SETTINGS[member_kind],
            echo_factor=echo_factor,
            **fields,
        )
        plan = plan_ground_truth(scenario, timing)
        scenario.expected_transitions = [
            ExpectedTransition(block_index=block, direction=direction)
            for block, direction in sorted(plan.transitions.items())
        ]
        scenarios.append(scenario)
    labels = Counter(event.label.value for s in scenarios for event in s.events)
    logger.info("Generated %d %s scenarios (seed %d): %s", count, kind.value, seed, dict(sorted(labels.items())))
    return scenarios


def plan_ground_truth(scenario: Scenario, timing: TimingConfig) -> GroundTruthPlan:
    """Ideal transitions and reply text, walked block by block with the synthesizer.

    While listening the assistant takes the turn in the last block of a
    turn-ending utterance. While speaking it yields at the onset block of a
    true barge-in (cutting the reply off), otherwise emits reply text until
    the reply is done and hands the turn back in the block where its audio
    runs out.
    """
    B = timing.block_ms
    turn_end_blocks = {last_block_before(event.end_ms, timing) for event in scenario.turn_ends}
    barge_blocks = {
        block_of_ms(event.start_ms, timing) for event in scenario.events if event.label is EventLabel.TRUE_BARGE_IN
    }
    script_end = max(scenario.events_end_ms, scenario.end_ms or 0)

    plan = GroundTruthPlan()
    playback = PlaybackState()
    speaking = False
    emitted = 0
    remaining = 0
    k = 0
    while speaking or k * B < script_end:
        playback = advance_block(playback, timing)
        symbol = utterance_symbol(scenario.events, k, timing)
        if symbol is not None:
            plan.utterance_symbols[k] = symbol
        if not speaking:
            if k in turn_end_blocks:
                plan.transitions[k] = Direction.TO_SPEAKING
                speaking, emitted, remaining = True, 0, scenario.response_tokens
        elif k in barge_blocks:
            plan.transitions[k] = Direction.TO_LISTENING
            if remaining > 0 or not playback.idle:
                plan.truncations.append(k)
            playback = flush_on_interrupt(playback)
            speaking, remaining = False, 0
        elif remaining > 0:
            plan.response_symbols[k] = response_symbol(emitted)
            playback, _ = feed_text_token(playback, Token(TokenKind.TEXT, k, plan.response_symbols[k]), timing)
            emitted += 1
            remaining -= 1
            if remaining == 0:
                playback, _ = finish_response(playback, timing, k)
        elif not playback.playing:
            plan.transitions[k] = Direction.TO_LISTENING
            speaking = False
        k += 1
    plan.speech_end_ms = playback.next_free_ms
    plan.end_ms = max(script_end, plan.speech_end_ms)
    return plan


def run_blocks(scenario: Scenario, plan: GroundTruthPlan, timing: TimingConfig, grace_ms: int) -> int:
    """Number of blocks a run of ``scenario`` lasts: script or ideal speech end plus grace."""
    end = max(scenario.events_end_ms, plan.speech_end_ms, scenario.end_ms or 0)
    return math.ceil((end + grace_ms) / timing.block_ms)
