"""Frame synthesis for both streams: scripted events, the assistant's playback and its echo."""

from __future__ import annotations

from typing import Mapping, Sequence

from duplex_engine.schemas.scenario import EventKind, EventLabel, ScenarioEvent
from duplex_engine.schemas.timing import TimingConfig
from duplex_engine.timebase import FIRST_WORD_SYMBOL, Frame, Speaker, block_end_ms, block_of_ms, block_start_ms

ASSISTANT_ENERGY = 0.8
# Energy scale of the last block of a turn-ending utterance.
TURN_YIELD_FACTOR = 0.25
RESPONSE_SYMBOL_BASE = 10_000
UTTERANCE_SYMBOL_BASE = 100
UTTERANCE_SYMBOL_STRIDE = 100

_EVENT_SPEAKER = {
    EventKind.USER_UTTERANCE: Speaker.USER,
    EventKind.BACKCHANNEL: Speaker.USER,
    EventKind.THIRD_PARTY_UTTERANCE: Speaker.THIRD_PARTY,
}


def response_symbol(index: int) -> int:
    """Text symbol of the ``index``-th token of an assistant reply."""
    return RESPONSE_SYMBOL_BASE + index


def assistant_frames(block_index: int, played_ms: int, timing: TimingConfig) -> tuple[Frame, ...]:
    """Assistant-stream frames of one block; the first ``played_ms`` carry speech."""
    fpb = timing.frames_per_block
    voiced = played_ms // timing.frame_ms
    frames = []
    for j in range(fpb):
        t = block_index * fpb + j
        if j < voiced:
            frames.append(Frame(t, activity=1.0, speaker=Speaker.ASSISTANT, energy=ASSISTANT_ENERGY))
        else:
            frames.append(Frame.silent(t))
    return tuple(frames)


def echo_inject(
    asst_frames: Sequence[Frame], factor: float, delay_blocks: int, frames_per_block: int
) -> list[Frame]:
    """Echo of the assistant's own speech as it reaches the environment stream.

    Each voiced assistant frame reappears ``delay_blocks`` blocks later with
    speaker AssistantEcho and energy scaled by ``factor``. A zero factor
    contributes nothing.

    Raises:
        ValueError: ``factor`` or ``delay_blocks`` is negative.
    """
    if factor < 0:
        raise ValueError(f"echo factor must be non-negative, got {factor}")
    if delay_blocks < 0:
        raise ValueError(f"echo delay must be non-negative, got {delay_blocks}")
    if factor == 0:
        return []
    shift = delay_blocks * frames_per_block
    echo = []
    for frame in asst_frames:
        if frame.speaker is not Speaker.ASSISTANT or frame.activity == 0.0:
            continue
        energy = factor * frame.energy
        echo.append(
            Frame(
                frame.t_index + shift,
                activity=1.0,
                speaker=Speaker.ASSISTANT_ECHO,
                energy=energy,
                echo_energy=energy,
            )
        )
    return echo


def _event_energy(event: ScenarioEvent, ms: int, timing: TimingConfig) -> float:
    if event.label is EventLabel.TURN_END and ms >= event.end_ms - timing.block_ms:
        return event.energy * TURN_YIELD_FACTOR
    return event.energy


def environment_frames(
    block_index: int,
    events: Sequence[ScenarioEvent],
    echo: Mapping[int, Frame],
    timing: TimingConfig,
) -> tuple[Frame, ...]:
    """Mix scripted speech and echo into one block of environment frames.

    Overlapping speakers resolve to the louder one, relevance is the maximum
    of the audible events. Echo only sets ``echo_energy`` unless nothing else
    is audible, in which case the frame is attributed to AssistantEcho.
    """
    fpb = timing.frames_per_block
    start = block_start_ms(block_index, timing)
    end = block_end_ms(block_index, timing)
    live = [event for event in events if event.audible and event.start_ms < end and event.end_ms > start]
    frames = []
    for j in range(fpb):
        t = block_index * fpb + j
        ms = t * timing.frame_ms
        echo_frame = echo.get(t)
        echo_energy = echo_frame.echo_energy if echo_frame is not None else 0.0
        speaker = Speaker.NONE
        energy = 0.0
        relevance = 0.0
        for event in live:
            if not event.start_ms <= ms < event.end_ms:
                continue
            level = _event_energy(event, ms, timing)
            relevance = max(relevance, event.relevance)
            if level > energy:
                speaker, energy = _EVENT_SPEAKER[event.kind], level
        if speaker is not Speaker.NONE:
            frames.append(Frame(t, 1.0, speaker, relevance, energy, echo_energy))
        elif echo_energy > 0.0:
            frames.append(Frame(t, 1.0, Speaker.ASSISTANT_ECHO, 0.0, echo_energy, echo_energy))
        else:
            frames.append(Frame.silent(t))
    return tuple(frames)


def _symbol_stride(events: Sequence[ScenarioEvent], timing: TimingConfig) -> int:
    spans = [
        block_of_ms(event.end_ms - 1, timing) - block_of_ms(event.start_ms, timing) + 1
        for event in events
        if event.audible
    ]
    return max([UTTERANCE_SYMBOL_STRIDE, *spans])


def utterance_symbol(events: Sequence[ScenarioEvent], block_index: int, timing: TimingConfig) -> int | None:
    """Transcript symbol of the loudest utterance heard in a block.

    Symbols are ``100 + stride * event_index + blocks_since_event_start``.
    The stride is 100 blocks, widened to the block span of the longest
    audible event so two events never share a symbol. None when nothing
    audible overlaps the block.
    """
    start = block_start_ms(block_index, timing)
    end = block_end_ms(block_index, timing)
    best: tuple[float, int] | None = None
    for idx, event in enumerate(events):
        if not event.audible or event.start_ms >= end or event.end_ms <= start:
            continue
        if best is None or event.energy > best[0]:
            best = (event.energy, idx)
    if best is None:
        return None
    idx = best[1]
    offset = block_index - block_of_ms(events[idx].start_ms, timing)
    symbol = UTTERANCE_SYMBOL_BASE + _symbol_stride(events, timing) * idx + offset
    return max(symbol, FIRST_WORD_SYMBOL)
