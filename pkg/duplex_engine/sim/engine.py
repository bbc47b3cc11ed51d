"""Block-stepped closed loop between a policy and a scripted environment.

Per block the engine plays queued audio, assembles both streams (the
environment mixes scripted speech with the delayed echo of the assistant's own
playback), encodes them, asks the policy for an action, renders it to a token,
advances the state machine and feeds reply text to the synthesizer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from duplex_engine.encoder.frontend import StreamingEncoder
from duplex_engine.errors import ConfigError, ProtocolViolationError
from duplex_engine.interleaver.labels import stay_token, switch_token
from duplex_engine.policy.features import BlockFeatures, FeatureHistory, base_features
from duplex_engine.policy.model import ModelPolicy, Policy, PolicyAction
from duplex_engine.policy.oracle import GroundTruthPlan, OraclePolicy
from duplex_engine.schemas.config import EngineConfig, config_hash
from duplex_engine.schemas.scenario import EventLabel, Scenario, ScenarioEvent
from duplex_engine.schemas.transcript import BlockRecord, JudgedEvent, PlaybackEvent, Transcript, TranscriptHeader
from duplex_engine.sim.frames import (
    assistant_frames,
    echo_inject,
    environment_frames,
    response_symbol,
    utterance_symbol,
)
from duplex_engine.sim.scenarios import plan_ground_truth, run_blocks
from duplex_engine.synth.scheduler import (
    PlaybackState,
    SpeechChunk,
    advance_block,
    feed_text_token,
    finish_response,
    flush_on_interrupt,
)
from duplex_engine.timebase import (
    DialogueState,
    Frame,
    State,
    StrategyKind,
    TimeBlock,
    Token,
    TokenKind,
    apply_token,
    block_end_ms,
    block_start_ms,
)

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class ResponseCursor:
    """Progress through the current reply's text tokens."""

    total: int
    emitted: int = 0

    @property
    def remaining(self) -> int:
        return self.total - self.emitted

    def take(self) -> int:
        symbol = response_symbol(self.emitted)
        self.emitted += 1
        return symbol


def judged_events(scenario: Scenario) -> list[JudgedEvent]:
    return [
        JudgedEvent(
            onset_ms=event.start_ms,
            end_ms=event.end_ms,
            label=event.label,
            setting=scenario.setting,
            positive=event.label is EventLabel.TRUE_BARGE_IN,
        )
        for event in scenario.events
        if event.is_judged_interrupt
    ]


class DuplexEngine:
    """Closed-loop engine advanced one block per ``step``.

    Args:
        scenario: Script of environment events; more can be added while running.
        policy: Decision maker queried once per block.
        cfg: Resolved engine config (timing, strategy, echo delay).
        strict: Raise on protocol violations instead of only logging them.

    Raises:
        ConfigError: A model policy trained for another strategy.
    """

    def __init__(self, scenario: Scenario, policy: Policy, cfg: EngineConfig, *, strict: bool = False) -> None:
        if isinstance(policy, ModelPolicy) and policy.model.strategy is not cfg.strategy:
            raise ConfigError(
                f"policy was trained for the {policy.model.strategy.value} strategy, "
                f"run uses {cfg.strategy.value}"
            )
        self.scenario = scenario
        self.policy = policy
        self.cfg = cfg
        self.timing = cfg.timing
        self.strategy: StrategyKind = cfg.strategy
        self.strict = strict
        self.config_hash = config_hash(cfg)
        self.block_index = 0
        self.state = DialogueState()
        self.playback = PlaybackState()
        self.cursor: ResponseCursor | None = None
        self.records: list[BlockRecord] = []
        self.blocks: list[TimeBlock] = []
        self._history = FeatureHistory(policy.history)
        self._env_encoder = StreamingEncoder()
        self._asst_log: dict[int, tuple[Frame, ...]] = {}
        self._response_started = False

    @property
    def speaking(self) -> bool:
        return self.state.speaking

    def add_event(self, event: ScenarioEvent) -> None:
        """Append an event; it takes effect from the next block at the earliest.

        An oracle policy is re-planned against the extended script.

        Raises:
            ValueError: The event starts before the next block or breaks the script's ordering.
        """
        now = block_start_ms(self.block_index, self.timing)
        if event.start_ms < now:
            raise ValueError(f"event at {event.start_ms} ms starts before the next block ({now} ms)")
        data = self.scenario.model_dump(mode="json")
        data["events"].append(event.model_dump(mode="json"))
        self.scenario = Scenario.model_validate(data)
        if isinstance(self.policy, OraclePolicy):
            self.policy.replan(plan_ground_truth(self.scenario, self.timing))
        logger.info("Event %s added at %d ms (block %d)", event.kind.value, event.start_ms, self.block_index)

    def _echo_map(self, k: int) -> dict[int, Frame]:
        delay = self.cfg.echo.delay_blocks
        source = self._asst_log.get(k - delay)
        if source is None:
            return {}
        frames = echo_inject(source, self.scenario.echo_factor, delay, self.timing.frames_per_block)
        return {frame.t_index: frame for frame in frames}

    def _render(self, action: PolicyAction, k: int) -> tuple[Token, bool]:
        state = self.state.state
        if action is PolicyAction.SWITCH:
            return switch_token(self.strategy, state, k), False
        asr = utterance_symbol(self.scenario.events, k, self.timing)
        if action is PolicyAction.TEXT:
            if state is State.LISTENING:
                logger.warning("Protocol violation in %s: text while listening at block %d", self.scenario.id, k)
                if self.strict:
                    raise ProtocolViolationError(f"{self.scenario.id}: text while listening at block {k}")
                return stay_token(self.strategy, state, k, asr), True
            if self.cursor is not None and self.cursor.remaining > 0:
                return Token(TokenKind.TEXT, k, self.cursor.take()), False
        return stay_token(self.strategy, state, k, asr), False

    def _chunk_events(self, chunk: SpeechChunk | None) -> list[PlaybackEvent]:
        if chunk is None:
            return []
        events = []
        if not self._response_started:
            events.append(PlaybackEvent(kind="speech_start", ms=chunk.start_ms))
            self._response_started = True
        events.append(PlaybackEvent(kind="speech_chunk", ms=chunk.start_ms, duration_ms=chunk.duration_ms))
        return events

    def step(self) -> BlockRecord:
        """Run one block and return its record.

        Raises:
            ProtocolViolationError: Strict run and the policy emitted text while listening.
        """
        k = self.block_index
        timing = self.timing
        playback_events: list[PlaybackEvent] = []

        had_audio = self.playback.buffered_ms > 0
        self.playback = advance_block(self.playback, timing)
        if had_audio and self.playback.buffered_ms == 0:
            end = block_start_ms(k, timing) + self.playback.played_ms
            playback_events.append(PlaybackEvent(kind="speech_end", ms=end))

        asst = assistant_frames(k, self.playback.played_ms, timing)
        self._asst_log[k] = asst
        self._asst_log.pop(k - self.cfg.echo.delay_blocks - 1, None)
        env = environment_frames(k, self.scenario.events, self._echo_map(k), timing)
        env_embeddings = self._env_encoder.push(env)

        speaking = self.state.speaking
        text_done = self.cursor is None or self.cursor.remaining == 0
        base = base_features(
            env_embeddings,
            playing=self.playback.playing,
            text_done=text_done,
            blocks_since_transition=k - self.state.since_block,
            speaking=speaking,
        )
        features = BlockFeatures(k, base, self._history.snapshot(), speaking)
        self._history.push(base)

        action = self.policy.decide(features)
        token, violation = self._render(action, k)
        before = self.state
        self.state = apply_token(self.state, token)

        if before.speaking and not self.state.speaking:
            pending = self.cursor is not None and self.cursor.remaining > 0
            if pending or not self.playback.idle:
                playback_events.append(PlaybackEvent(kind="speech_truncated", ms=block_end_ms(k, timing)))
                logger.info("Speech truncated in %s at block %d", self.scenario.id, k)
            self.playback = flush_on_interrupt(self.playback)
            self.cursor = None
        elif not before.speaking and self.state.speaking:
            self.cursor = ResponseCursor(total=self.scenario.response_tokens)
            self._response_started = False
        elif before.speaking and token.kind is TokenKind.TEXT and self.cursor is not None and token.symbol >= 2:
            self.playback, chunk = feed_text_token(self.playback, token, timing)
            playback_events.extend(self._chunk_events(chunk))
            if self.cursor.remaining == 0:
                self.playback, chunk = finish_response(self.playback, timing, k)
                playback_events.extend(self._chunk_events(chunk))

        record = BlockRecord(
            block_index=k,
            state=before.state,
            action=action.name.lower(),
            token=token.label,
            state_after=self.state.state,
            buffered_ms=self.playback.buffered_ms,
            playback=playback_events,
            features=[float(v) for v in base],
            violation=violation,
        )
        self.records.append(record)
        self.blocks.append(TimeBlock(k, env, asst, token, frames_per_block=timing.frames_per_block))
        self.block_index += 1
        return record

    def transcript(self) -> Transcript:
        header = TranscriptHeader(
            scenario_id=self.scenario.id,
            config_hash=self.config_hash,
            strategy=self.strategy,
            policy=self.policy.name,
            block_ms=self.timing.block_ms,
            echo_factor=self.scenario.echo_factor,
            turn_ends_ms=[event.end_ms for event in self.scenario.turn_ends],
            judged_events=judged_events(self.scenario),
            n_blocks=len(self.records),
        )
        return Transcript(header=header, records=list(self.records))


def run_conversation(
    scenario: Scenario,
    policy: Policy,
    strategy: StrategyKind,
    cfg: EngineConfig,
    *,
    strict: bool = False,
    plan: GroundTruthPlan | None = None,
) -> Transcript:
    """Run ``scenario`` to its end plus the grace period.

    The run lasts until the script or the ideal reply audio ends, whichever is
    later, plus ``cfg.grace_ms``.

    Raises:
        ConfigError: Policy and strategy are incompatible.
        ProtocolViolationError: Strict run with text emitted while listening.
    """
    if strategy is not cfg.strategy:
        cfg = cfg.model_copy(update={"strategy": strategy})
    plan = plan or plan_ground_truth(scenario, cfg.timing)
    engine = DuplexEngine(scenario, policy, cfg, strict=strict)
    for _ in range(run_blocks(scenario, plan, cfg.timing, cfg.grace_ms)):
        engine.step()
    transcript = engine.transcript()
    if transcript.violations:
        logger.warning("%s: %d protocol violations", scenario.id, transcript.violations)
    return transcript
