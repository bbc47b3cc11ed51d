"""Streaming synthesizer model: N text tokens in, M speech tokens out, plus playback."""

from __future__ import annotations

from dataclasses import dataclass, replace

from duplex_engine.schemas.timing import TimingConfig
from duplex_engine.timebase import Token, TokenKind, block_end_ms


@dataclass(frozen=True, slots=True)
class SpeechChunk:
    """Speech produced by one synthesis call.

    Attributes:
        tokens: Speech tokens in the chunk.
        start_ms: Wall-clock start of playback.
        duration_ms: Playback length.
        source_text_blocks: Blocks whose text tokens produced the chunk.
    """

    tokens: int
    start_ms: int
    duration_ms: int
    source_text_blocks: range

    @property
    def end_ms(self) -> int:
        return self.start_ms + self.duration_ms


@dataclass(frozen=True, slots=True)
class PlaybackState:
    """Synthesizer and playback buffer.

    Attributes:
        buffered_ms: Queued audio not yet played.
        playing: Whether audio is still audible after the current block.
        pending_text: Text tokens waiting for the next synthesis call.
        emitted_this_block: A chunk was emitted since the last advance.
        next_free_ms: Wall-clock end of the queued audio.
        played_ms: Audio played during the current block.
        pending_since: Block of the oldest pending text token.
    """

    buffered_ms: int = 0
    playing: bool = False
    pending_text: int = 0
    emitted_this_block: bool = False
    next_free_ms: int = 0
    played_ms: int = 0
    pending_since: int | None = None

    @property
    def idle(self) -> bool:
        return self.buffered_ms == 0 and self.pending_text == 0


def _emit(state: PlaybackState, tokens: int, last_block: int, cfg: TimingConfig) -> tuple[PlaybackState, SpeechChunk]:
    first_block = state.pending_since if state.pending_since is not None else last_block
    duration = tokens * cfg.speech_token_ms
    start = max(state.next_free_ms, block_end_ms(last_block, cfg))
    chunk = SpeechChunk(
        tokens=tokens,
        start_ms=start,
        duration_ms=duration,
        source_text_blocks=range(first_block, last_block + 1),
    )
    new_state = replace(
        state,
        buffered_ms=state.buffered_ms + duration,
        playing=True,
        pending_text=0,
        emitted_this_block=True,
        next_free_ms=start + duration,
        pending_since=None,
    )
    return new_state, chunk


def feed_text_token(
    state: PlaybackState, tok: Token, cfg: TimingConfig
) -> tuple[PlaybackState, SpeechChunk | None]:
    """Hand one text token to the synthesizer.

    Every ``n_text`` tokens a chunk of ``m_speech`` speech tokens is queued,
    starting when the earlier audio ends or at the end of the token's block.

    Raises:
        ValueError: ``tok`` is a control token.
    """
    if tok.kind is not TokenKind.TEXT:
        raise ValueError(f"only text tokens feed the synthesizer, got {tok.kind.value}")
    pending = state.pending_text + 1
    since = state.pending_since if state.pending_since is not None else tok.block_index
    state = replace(state, pending_text=pending, pending_since=since)
    if pending < cfg.n_text:
        return state, None
    return _emit(state, cfg.m_speech, tok.block_index, cfg)


def finish_response(
    state: PlaybackState, cfg: TimingConfig, block_index: int
) -> tuple[PlaybackState, SpeechChunk | None]:
    """Synthesize the residual text of a finished response as a short chunk."""
    if state.pending_text == 0:
        return state, None
    tokens = state.pending_text * cfg.m_speech // cfg.n_text
    return _emit(state, tokens, block_index, cfg)


def advance_block(state: PlaybackState, cfg: TimingConfig) -> PlaybackState:
    """Play one block's worth of queued audio."""
    played = min(state.buffered_ms, cfg.block_ms)
    remaining = state.buffered_ms - played
    return replace(
        state,
        buffered_ms=remaining,
        playing=remaining > 0 or state.emitted_this_block,
        emitted_this_block=False,
        played_ms=played,
    )


def flush_on_interrupt(state: PlaybackState) -> PlaybackState:
    """Drop queued audio and pending text."""
    if state.idle and not state.playing and not state.emitted_this_block:
        return state
    return replace(
        state,
        buffered_ms=0,
        playing=False,
        pending_text=0,
        emitted_this_block=False,
        next_free_ms=state.next_free_ms - state.buffered_ms,
        pending_since=None,
    )
