"""Unit tests for frames, blocks, tokens and the timing arithmetic."""

from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from pydantic import ValidationError

from duplex_engine.schemas.timing import TimingConfig
from duplex_engine.timebase import (
    DialogueState,
    Frame,
    Speaker,
    State,
    TimeBlock,
    Token,
    TokenKind,
    apply_token,
    block_end_ms,
    block_of_ms,
    block_start_ms,
    blocks_per_second,
    last_block_before,
    onset_latency,
    speech_chunk_duration,
    transcript_duration_ms,
)


@pytest.mark.parametrize(
    ("block_ms", "n_text", "expected"),
    [(80, 4, 320), (80, 1, 80), (40, 4, 160)],
)
def test_onset_latency(block_ms: int, n_text: int, expected: int) -> None:
    assert onset_latency(TimingConfig(block_ms=block_ms, n_text=n_text)) == expected


@pytest.mark.parametrize(("m_speech", "expected"), [(12, 480), (0, 0), (6, 240)])
def test_speech_chunk_duration(m_speech: int, expected: int) -> None:
    assert speech_chunk_duration(TimingConfig(m_speech=m_speech, speech_token_ms=40)) == expected


@pytest.mark.parametrize(("block_ms", "expected"), [(80, Fraction(25, 2)), (100, Fraction(10)), (40, Fraction(25))])
def test_blocks_per_second(block_ms: int, expected: Fraction) -> None:
    assert blocks_per_second(TimingConfig(block_ms=block_ms)) == expected


def test_blocks_per_second_is_exact_rational() -> None:
    assert float(blocks_per_second(TimingConfig())) == 12.5


def test_zero_block_duration_is_rejected() -> None:
    with pytest.raises(ValidationError):
        TimingConfig(block_ms=0)


def test_block_must_hold_whole_frames() -> None:
    with pytest.raises(ValidationError):
        TimingConfig(block_ms=85)


def test_default_timing_grid() -> None:
    cfg = TimingConfig()
    assert cfg.frames_per_block == 8
    assert cfg.embeddings_per_block == 2


def test_block_boundaries_are_exact() -> None:
    cfg = TimingConfig()
    assert block_start_ms(3, cfg) == 240
    assert block_end_ms(3, cfg) == 320
    assert block_of_ms(79, cfg) == 0
    assert block_of_ms(80, cfg) == 1
    assert last_block_before(80, cfg) == 0
    assert last_block_before(81, cfg) == 1


def test_transcript_duration_is_sum_of_blocks() -> None:
    cfg = TimingConfig()
    assert transcript_duration_ms(37, cfg) == sum(block_end_ms(k, cfg) - block_start_ms(k, cfg) for k in range(37))


def test_silent_frame_cannot_carry_speaker() -> None:
    with pytest.raises(ValueError):
        Frame(t_index=0, activity=0.0, speaker=Speaker.USER)


def test_frame_rejects_out_of_range_values() -> None:
    with pytest.raises(ValueError):
        Frame(t_index=-1)
    with pytest.raises(ValueError):
        Frame(t_index=0, activity=1.5, speaker=Speaker.USER)
    with pytest.raises(ValueError):
        Frame(t_index=0, relevance=-0.1)


def test_time_block_streams_must_cover_same_interval() -> None:
    env = tuple(Frame.silent(t) for t in range(8))
    shifted = tuple(Frame.silent(t + 1) for t in range(8))
    with pytest.raises(ValueError):
        TimeBlock(0, env, shifted)
    with pytest.raises(ValueError):
        TimeBlock(0, env, env[:7])


def test_time_block_holds_one_block_of_frames() -> None:
    short = tuple(Frame.silent(t) for t in range(7))
    with pytest.raises(ValueError):
        TimeBlock(0, short, short)
    long = tuple(Frame.silent(t) for t in range(9))
    with pytest.raises(ValueError):
        TimeBlock(0, long, long)
    elsewhere = tuple(Frame.silent(t) for t in range(8))
    with pytest.raises(ValueError):
        TimeBlock(1, elsewhere, elsewhere)
    block = tuple(Frame.silent(t) for t in range(8, 16))
    assert TimeBlock(1, block, block).frames_per_block == 8
    wide = tuple(Frame.silent(t) for t in range(12, 24))
    TimeBlock(1, wide, wide, frames_per_block=12)
    with pytest.raises(ValueError):
        TimeBlock(1, wide, wide)


def test_time_block_token_must_belong_to_block() -> None:
    env = tuple(Frame.silent(t) for t in range(8))
    with pytest.raises(ValueError):
        TimeBlock(0, env, env, Token(TokenKind.THINK, 1))


def test_token_label_round_trip() -> None:
    for token in (Token(TokenKind.TEXT, 4, 1002), Token(TokenKind.SHIFT, 4), Token(TokenKind.LISTEN, 4)):
        assert Token.parse(token.label, 4) == token


def test_token_symbol_rules() -> None:
    with pytest.raises(ValueError):
        Token(TokenKind.TEXT, 0)
    with pytest.raises(ValueError):
        Token(TokenKind.THINK, 0, 5)


def test_shift_toggles_from_next_block() -> None:
    state = apply_token(DialogueState(), Token(TokenKind.SHIFT, 6))
    assert state.state is State.SPEAKING
    assert state.since_block == 7
    assert apply_token(state, Token(TokenKind.THINK, 7)) is state


def test_implicit_tokens_toggle_only_across_states() -> None:
    listening = DialogueState()
    assert apply_token(listening, Token(TokenKind.LISTEN, 0)) is listening
    speaking = apply_token(listening, Token(TokenKind.SPEAK, 0))
    assert speaking.speaking
    assert apply_token(speaking, Token(TokenKind.SPEAK, 1)) is speaking
    assert not apply_token(speaking, Token(TokenKind.LISTEN, 1)).speaking


def test_shift_parity_over_random_runs() -> None:
    rng = np.random.default_rng(11)
    kinds = [TokenKind.THINK, TokenKind.SHIFT, TokenKind.TEXT]
    for _ in range(200):
        state = DialogueState()
        shifts = 0
        for k in range(int(rng.integers(1, 60))):
            kind = kinds[int(rng.integers(0, 3))]
            token = Token(kind, k, 2 if kind is TokenKind.TEXT else None)
            shifts += kind is TokenKind.SHIFT
            state = apply_token(state, token)
        assert (shifts % 2 == 0) == (state.state is State.LISTENING)
