"""Tests for scenario suites, frame synthesis and the closed-loop engine."""

from __future__ import annotations

import os
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from duplex_engine.errors import ConfigError, ProtocolViolationError
from duplex_engine.metrics.duplex import (
    interruption_prf,
    judge_interrupts,
    latency_report,
    safe_prf,
    turn_taking_success,
)
from duplex_engine.policy.features import BASE_FEATURES, ECHO_INDEX, BlockFeatures
from duplex_engine.policy.model import ModelPolicy, PolicyAction, PolicyModel
from duplex_engine.policy.oracle import GroundTruthPlan, OraclePolicy
from duplex_engine.schemas.config import EngineConfig
from duplex_engine.schemas.scenario import (
    Direction,
    EventKind,
    EventLabel,
    Scenario,
    ScenarioEvent,
    Setting,
    SuiteKind,
)
from duplex_engine.sim.engine import DuplexEngine, run_conversation
from duplex_engine.sim.frames import assistant_frames, echo_inject, environment_frames, utterance_symbol
from duplex_engine.sim.scenarios import generate_suite, plan_ground_truth, run_blocks
from duplex_engine.sim.storage import (
    build_manifest,
    read_suite,
    read_transcript,
    transcript_path,
    write_suite,
    write_transcript,
)
from duplex_engine.timebase import Speaker, StrategyKind

CFG = EngineConfig()


class AlwaysText:
    name = "always-text"
    history = 0

    def decide(self, features: BlockFeatures) -> PolicyAction:
        return PolicyAction.TEXT


def _question(start_ms: int = 160, duration_ms: int = 800) -> ScenarioEvent:
    return ScenarioEvent(
        kind=EventKind.USER_UTTERANCE,
        start_ms=start_ms,
        duration_ms=duration_ms,
        relevance=0.9,
        label=EventLabel.TURN_END,
    )


def _barge_in_scenario(echo_factor: float = 1.0) -> Scenario:
    barge = ScenarioEvent(
        kind=EventKind.USER_UTTERANCE,
        start_ms=2400,
        duration_ms=800,
        relevance=0.9,
        label=EventLabel.TRUE_BARGE_IN,
    )
    return Scenario(
        id="barge",
        setting=Setting.INDEPENDENT,
        events=[_question(), barge],
        response_tokens=40,
        echo_factor=echo_factor,
    )


def _oracle_run(scenario: Scenario, strategy: StrategyKind = StrategyKind.EXPLICIT, cfg: EngineConfig = CFG):
    plan = plan_ground_truth(scenario, cfg.timing)
    policy = OraclePolicy(plan, history=cfg.training.history)
    return run_conversation(scenario, policy, strategy, cfg, plan=plan)


def test_suite_is_deterministic_in_seed() -> None:
    first = generate_suite(SuiteKind.MIXED, 8, seed=3)
    second = generate_suite(SuiteKind.MIXED, 8, seed=3)
    other = generate_suite(SuiteKind.MIXED, 8, seed=4)
    assert [s.model_dump() for s in first] == [s.model_dump() for s in second]
    assert [s.model_dump() for s in first] != [s.model_dump() for s in other]


def test_barge_in_suite_puts_positives_first() -> None:
    scenarios = generate_suite("barge-in-independent", 5, seed=1)
    labels = [s.events[-1].label for s in scenarios]
    assert labels == [EventLabel.TRUE_BARGE_IN] * 3 + [EventLabel.BACKCHANNEL] * 2
    speakers = [s.events[-1].kind for s in scenarios[:3]]
    assert speakers == [EventKind.USER_UTTERANCE, EventKind.THIRD_PARTY_UTTERANCE, EventKind.USER_UTTERANCE]
    assert {s.setting for s in scenarios} == {Setting.INDEPENDENT}


@pytest.mark.parametrize("kind", [SuiteKind.BARGE_IN_INDEPENDENT, SuiteKind.BARGE_IN_DEPENDENT])
def test_barge_in_positives_split_evenly_between_speakers(kind: SuiteKind) -> None:
    scenarios = generate_suite(kind, 200, seed=3)
    speakers = Counter(
        event.kind for s in scenarios for event in s.events if event.label is EventLabel.TRUE_BARGE_IN
    )
    assert speakers == {EventKind.USER_UTTERANCE: 50, EventKind.THIRD_PARTY_UTTERANCE: 50}


def test_dependent_negatives_alternate_distractor_and_silence() -> None:
    scenarios = generate_suite(SuiteKind.BARGE_IN_DEPENDENT, 4, seed=2)
    kinds = [s.events[-1].kind for s in scenarios[2:]]
    assert kinds == [EventKind.THIRD_PARTY_UTTERANCE, EventKind.SILENCE]
    assert scenarios[2].events[-1].label is EventLabel.FALSE_BARGE_IN


def test_mixed_suite_cycles_settings() -> None:
    scenarios = generate_suite(SuiteKind.MIXED, 8, seed=5)
    settings = [s.setting for s in scenarios[:4]]
    assert settings == [Setting.TURN_TAKING, Setting.INDEPENDENT, Setting.DEPENDENT, Setting.BACKCHANNEL]
    assert scenarios[0].multi_speaker


def test_suite_rejects_bad_arguments() -> None:
    with pytest.raises(ValueError):
        generate_suite(SuiteKind.TURN_TAKING, 0, seed=1)
    with pytest.raises(ValueError):
        generate_suite("karaoke", 2, seed=1)


def test_events_are_block_aligned() -> None:
    for scenario in generate_suite(SuiteKind.MIXED, 12, seed=9):
        for event in scenario.events:
            assert event.start_ms % 80 == 0
            assert event.duration_ms % 80 == 0


def test_expected_transitions_follow_plan() -> None:
    for scenario in generate_suite(SuiteKind.BARGE_IN_INDEPENDENT, 4, seed=6):
        plan = plan_ground_truth(scenario, CFG.timing)
        assert [(t.block_index, t.direction) for t in scenario.expected_transitions] == sorted(plan.transitions.items())


def test_overlapping_speech_needs_multi_speaker() -> None:
    events = [_question(0, 800), _question(400, 800)]
    with pytest.raises(ValueError):
        Scenario(id="x", events=events)
    Scenario(id="x", events=events, multi_speaker=True)


def test_plan_takes_turn_in_last_utterance_block() -> None:
    scenario = Scenario(id="q", events=[_question()], response_tokens=12)
    plan = plan_ground_truth(scenario, CFG.timing)
    assert plan.transitions[11] is Direction.TO_SPEAKING
    assert sorted(plan.response_symbols) == list(range(12, 24))
    assert plan.speech_end_ms == 1280 + 3 * 480
    assert run_blocks(scenario, plan, CFG.timing, CFG.grace_ms) == (plan.speech_end_ms + 2000) // 80


def test_oracle_speaks_one_onset_latency_after_turn_end() -> None:
    transcript = _oracle_run(Scenario(id="q", events=[_question()], response_tokens=12))
    (start,) = transcript.playback_events("speech_start")
    assert start.ms == 960 + 320
    assert transcript.shift_blocks()[0] == 11
    assert transcript.violations == 0
    assert turn_taking_success([transcript]) == 1.0


def test_oracle_hands_turn_back_when_audio_ends() -> None:
    transcript = _oracle_run(Scenario(id="q", events=[_question()], response_tokens=12))
    (end,) = transcript.playback_events("speech_end")
    assert end.ms == 1280 + 3 * 480
    assert transcript.shift_blocks() == [11, end.ms // 80 - 1]
    assert not transcript.playback_events("speech_truncated")


def test_steady_reply_buffer() -> None:
    transcript = _oracle_run(Scenario(id="q", events=[_question()], response_tokens=12))
    chunks = transcript.playback_events("speech_chunk")
    assert [c.duration_ms for c in chunks] == [480, 480, 480]
    assert [c.ms for c in chunks] == [1280, 1760, 2240]


def test_barge_in_truncates_reply() -> None:
    transcript = _oracle_run(_barge_in_scenario())
    assert transcript.shift_blocks() == [11, 30]
    (truncated,) = transcript.playback_events("speech_truncated")
    assert truncated.ms == 31 * 80
    assert transcript.records[31].buffered_ms == 0
    (judgment,) = judge_interrupts(transcript)
    assert judgment.stopped and judgment.positive
    assert judgment.decision_latency_blocks == 0


def test_implicit_strategy_uses_state_tokens() -> None:
    transcript = _oracle_run(_barge_in_scenario(), StrategyKind.IMPLICIT)
    tokens = {record.token.split(":")[0] for record in transcript.records}
    assert tokens == {"listen", "speak", "text"}
    assert transcript.shift_blocks() == [11, 30]


def test_asr_strategy_transcribes_while_listening() -> None:
    transcript = _oracle_run(Scenario(id="q", events=[_question()], response_tokens=4), StrategyKind.EXPLICIT_ASR)
    assert transcript.records[0].token == "text:0"
    assert transcript.records[3].token.startswith("text:1")
    assert transcript.records[11].token == "shift"


def _assert_oracle_perfect(kind: SuiteKind, count: int) -> None:
    transcripts = [_oracle_run(s) for s in generate_suite(kind, count, seed=11)]
    assert sum(t.violations for t in transcripts) == 0
    assert turn_taking_success(transcripts) == 1.0
    latency = latency_report(transcripts).turn_taking
    assert (latency.count, latency.excluded) == (count, 0)
    assert latency.mean_ms == 320.0
    assert latency.p95_ms == 320.0
    judgments = [j for t in transcripts for j in judge_interrupts(t)]
    if any(j.positive for j in judgments):
        assert interruption_prf(judgments).f1 == pytest.approx(1.0)
    else:
        assert safe_prf(judgments).fp == 0
    assert all(j.stopped == j.positive for j in judgments)


@pytest.mark.parametrize("kind", list(SuiteKind))
def test_oracle_is_perfect_on_generated_suites(kind: SuiteKind) -> None:
    _assert_oracle_perfect(kind, 8)


@pytest.mark.skipif(not os.getenv("DUPLEX_RUN_SLOW"), reason="set DUPLEX_RUN_SLOW=1 to run full-size suites")
@pytest.mark.parametrize("kind", list(SuiteKind))
def test_oracle_is_perfect_on_full_size_suites(kind: SuiteKind) -> None:
    _assert_oracle_perfect(kind, 200)


def test_text_while_listening_is_a_violation() -> None:
    scenario = Scenario(id="q", events=[_question()], response_tokens=4)
    transcript = run_conversation(scenario, AlwaysText(), StrategyKind.EXPLICIT, CFG)
    assert transcript.violations == len(transcript.records)
    assert {record.token for record in transcript.records} == {"think"}
    assert not transcript.playback_events()


def test_strict_run_raises_on_violation() -> None:
    scenario = Scenario(id="q", events=[_question()], response_tokens=4)
    with pytest.raises(ProtocolViolationError):
        run_conversation(scenario, AlwaysText(), StrategyKind.EXPLICIT, CFG, strict=True)


def test_model_for_other_strategy_is_rejected() -> None:
    model = PolicyModel.zeros(history=0, strategy=StrategyKind.IMPLICIT)
    with pytest.raises(ConfigError):
        DuplexEngine(Scenario(id="q"), ModelPolicy(model), CFG)


def test_events_cannot_be_added_in_the_past() -> None:
    engine = DuplexEngine(Scenario(id="live"), OraclePolicy(GroundTruthPlan(), history=0), CFG)
    for _ in range(3):
        engine.step()
    with pytest.raises(ValueError):
        engine.add_event(_question(start_ms=160))
    engine.add_event(_question(start_ms=240))
    assert engine.scenario.events[0].start_ms == 240


def test_added_event_replans_the_oracle() -> None:
    engine = DuplexEngine(Scenario(id="live", end_ms=0), OraclePolicy(GroundTruthPlan(), history=0), CFG)
    engine.add_event(_question(start_ms=0))
    for _ in range(40):
        engine.step()
    assert engine.transcript().shift_blocks()[0] == 9


def test_echo_inject() -> None:
    asst = assistant_frames(4, 40, CFG.timing)
    echo = echo_inject(asst, 0.5, 1, 8)
    assert [f.t_index for f in echo] == [40, 41, 42, 43]
    assert all(f.speaker is Speaker.ASSISTANT_ECHO and f.echo_energy == pytest.approx(0.4) for f in echo)
    assert echo_inject(asst, 0.0, 1, 8) == []
    with pytest.raises(ValueError):
        echo_inject(asst, -1.0, 1, 8)


def test_echo_alone_is_attributed_to_the_echo() -> None:
    echo = {f.t_index: f for f in echo_inject(assistant_frames(0, 80, CFG.timing), 1.0, 1, 8)}
    frames = environment_frames(1, [], echo, CFG.timing)
    assert all(f.speaker is Speaker.ASSISTANT_ECHO for f in frames)
    louder = environment_frames(1, [_question(start_ms=80)], echo, CFG.timing)
    assert all(f.speaker is Speaker.USER and f.echo_energy > 0 for f in louder)


def test_utterance_symbol() -> None:
    events = [_question(start_ms=160, duration_ms=320)]
    assert utterance_symbol(events, 1, CFG.timing) is None
    assert utterance_symbol(events, 2, CFG.timing) == 100
    assert utterance_symbol(events, 5, CFG.timing) == 103


def test_long_utterances_keep_symbols_apart() -> None:
    events = [_question(start_ms=0, duration_ms=110 * 80), _question(start_ms=110 * 80, duration_ms=160)]
    symbols = [utterance_symbol(events, k, CFG.timing) for k in range(112)]
    assert symbols[:2] == [100, 101]
    assert symbols[109] == 209
    assert symbols[110:] == [210, 211]
    assert len(set(symbols)) == len(symbols)


def test_echo_reaches_features_but_not_decisions() -> None:
    loud = _oracle_run(_barge_in_scenario(echo_factor=1.0))
    quiet = _oracle_run(_barge_in_scenario(echo_factor=0.0))
    assert any(record.features[ECHO_INDEX] > 0 for record in loud.records)
    assert all(record.features[ECHO_INDEX] == 0 for record in quiet.records)
    assert loud.shift_blocks() == quiet.shift_blocks()


def _talker() -> PolicyModel:
    """Echo-blind scorer that takes the turn at once and keeps emitting reply text."""
    model = PolicyModel.initialize(hidden=1, history=CFG.training.history, scale=0.0, use_echo=False)
    w1 = np.zeros_like(model.w1)
    w1[0, BASE_FEATURES.index("speaking")] = 3.0
    w2 = np.zeros_like(model.w2)
    w2[PolicyAction.TEXT, 0] = 3.0
    b2 = np.zeros_like(model.b2)
    b2[PolicyAction.SWITCH] = 1.0
    return model.with_params({"w1": w1, "b1": model.b1, "w2": w2, "b2": b2})


def _records_at_echo(scenario: Scenario, model: PolicyModel, echo_factor: float):
    run = scenario.model_copy(update={"echo_factor": echo_factor})
    return run_conversation(run, ModelPolicy(model), StrategyKind.EXPLICIT, CFG).records


@pytest.mark.parametrize("seed", [None, 4])
def test_echo_blind_model_runs_identically_with_and_without_echo(seed: int | None) -> None:
    if seed is None:
        model = _talker()
    else:
        model = PolicyModel.initialize(history=CFG.training.history, seed=seed, scale=1.0, use_echo=False)
    heard_echo = False
    for scenario in generate_suite(SuiteKind.MIXED, 8, seed=12):
        loud = _records_at_echo(scenario, model, 1.0)
        quiet = _records_at_echo(scenario, model, 0.0)
        assert all(record.features[ECHO_INDEX] == 0 for record in quiet)
        heard_echo = heard_echo or any(record.features[ECHO_INDEX] > 0 for record in loud)
        assert [r.model_dump(exclude={"features"}) for r in loud] == [
            r.model_dump(exclude={"features"}) for r in quiet
        ]
    if seed is None:
        assert heard_echo


def test_transcript_file_round_trip(tmp_path: Path) -> None:
    transcript = _oracle_run(_barge_in_scenario())
    path = write_transcript(transcript_path(tmp_path, "barge", 0.5), transcript)
    assert path.name == "barge@echo0.5.transcript.jsonl"
    assert read_transcript(path) == transcript


def test_suite_directory_round_trip(tmp_path: Path) -> None:
    scenarios = generate_suite(SuiteKind.BACKCHANNEL, 3, seed=8)
    manifest = build_manifest(SuiteKind.BACKCHANNEL, 8, 1.0, scenarios)
    write_suite(tmp_path, manifest, scenarios)
    loaded_manifest, loaded = read_suite(tmp_path)
    assert loaded_manifest == manifest
    assert loaded == scenarios
    assert manifest.label_counts["backchannel"] >= 3
