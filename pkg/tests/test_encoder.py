"""Tests for the causal 100 Hz -> 50 Hz -> 25 Hz feature pipeline."""

from __future__ import annotations

import logging

import numpy as np
import pytest

from duplex_engine.encoder.frontend import (
    ACTIVITY,
    ECHO,
    FEATURE_DIM,
    USER,
    FeatureVector,
    StreamingEncoder,
    concat_pairs_50_to_25,
    downsample_100_to_50,
    encode_frames,
    frame_projection,
    l1_distill_loss,
)
from duplex_engine.timebase import Frame, Speaker


def _speech(t: int, activity: float = 1.0, speaker: Speaker = Speaker.USER) -> Frame:
    return Frame(t_index=t, activity=activity, speaker=speaker, relevance=0.7, energy=0.8)


def _random_frames(rng: np.random.Generator, n: int) -> list[Frame]:
    frames = []
    for t in range(n):
        if rng.random() < 0.5:
            frames.append(Frame.silent(t, echo_energy=round(float(rng.random()), 3)))
        else:
            frames.append(_speech(t, activity=round(float(rng.uniform(0.1, 1.0)), 3)))
    return frames


def test_one_second_gives_fifty_vectors() -> None:
    assert len(downsample_100_to_50([Frame.silent(t) for t in range(100)])) == 50


def test_one_block_gives_four_then_two() -> None:
    vectors = downsample_100_to_50([_speech(t) for t in range(8)])
    assert len(vectors) == 4
    embeddings = concat_pairs_50_to_25(vectors)
    assert len(embeddings) == 2
    assert embeddings[0].dim == 2 * FEATURE_DIM


def test_identical_frames_merge_to_their_projection() -> None:
    frame = _speech(0)
    (vector,) = downsample_100_to_50([frame, _speech(1)])
    np.testing.assert_allclose(vector.values, frame_projection(frame))


def test_empty_input_is_empty_output() -> None:
    assert downsample_100_to_50([]) == []
    assert encode_frames([]) == []


def test_odd_input_is_padded_and_flagged(caplog: pytest.LogCaptureFixture) -> None:
    with caplog.at_level(logging.WARNING):
        vectors = downsample_100_to_50([_speech(t) for t in range(5)])
    assert len(vectors) == 3
    assert [v.padded for v in vectors] == [False, False, True]
    assert len(vectors[-1].source) == 1
    assert "Odd frame count" in caplog.text


def test_odd_vector_count_is_rejected() -> None:
    vectors = downsample_100_to_50([_speech(t) for t in range(6)])
    with pytest.raises(ValueError):
        concat_pairs_50_to_25(vectors)


def test_zero_pair_concatenates_to_zero_vector() -> None:
    zero = FeatureVector(values=np.zeros(FEATURE_DIM))
    (out,) = concat_pairs_50_to_25([zero, zero])
    np.testing.assert_array_equal(out.values, np.zeros(2 * FEATURE_DIM))


def test_echo_only_frames_touch_only_the_echo_slot() -> None:
    values = frame_projection(Frame.silent(0, echo_energy=0.4))
    assert values[ECHO] == pytest.approx(0.4)
    assert values[ACTIVITY] == 0.0
    assert values[USER] == 0.0


def test_whole_blocks_give_two_embeddings_each() -> None:
    rng = np.random.default_rng(3)
    for blocks in range(1, 12):
        assert len(encode_frames(_random_frames(rng, 8 * blocks))) == 2 * blocks


def test_pipeline_is_causal() -> None:
    frames = _random_frames(np.random.default_rng(5), 64)
    full = encode_frames(frames)
    for k in range(4, 64, 4):
        prefix = encode_frames(frames[:k])
        for a, b in zip(prefix, full):
            np.testing.assert_array_equal(a.values, b.values)


def test_streaming_encoder_matches_batch() -> None:
    frames = _random_frames(np.random.default_rng(9), 80)
    encoder = StreamingEncoder()
    streamed = []
    for k in range(10):
        out = encoder.push(frames[8 * k : 8 * k + 8])
        assert len(out) == 2
        streamed.extend(out)
    batch = encode_frames(frames)
    assert encoder.emitted == len(batch)
    for a, b in zip(streamed, batch):
        np.testing.assert_array_equal(a.values, b.values)
        assert a.source == b.source


def test_embeddings_keep_their_source_frames() -> None:
    frames = [_speech(t) for t in range(8)]
    embeddings = encode_frames(frames)
    assert [f for e in embeddings for f in e.source] == frames


def test_l1_identical_sequences_is_zero() -> None:
    seq = encode_frames(_random_frames(np.random.default_rng(1), 16))
    assert l1_distill_loss(seq, seq) == 0.0


def test_l1_constant_offset() -> None:
    student = np.ones((4, 3)) * 2.0
    assert l1_distill_loss(student, student - 1.0) == pytest.approx(1.0)


def test_l1_matches_hand_computed_mean() -> None:
    student = np.array([[0.5, -1.0], [2.0, 0.0], [1.0, 1.0]])
    teacher = np.array([[0.0, 0.0], [1.0, 1.0], [3.0, 1.5]])
    # absolute differences sum to 6.0 over 6 elements
    assert l1_distill_loss(student, teacher) == pytest.approx(1.0)


def test_l1_applies_alignment_map() -> None:
    teacher = np.array([[1.0, 2.0, 3.0]])
    align = np.array([[1.0], [0.0], [1.0]])
    assert l1_distill_loss(np.array([[4.0]]), teacher, align) == 0.0


def test_l1_rejects_shape_mismatch() -> None:
    with pytest.raises(ValueError):
        l1_distill_loss(np.zeros((2, 3)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        l1_distill_loss(np.zeros((2, 3)), np.zeros((2, 4)))


def test_l1_is_a_metric_on_random_sequences() -> None:
    rng = np.random.default_rng(21)
    for _ in range(50):
        a, b, c = (rng.normal(size=(5, 4)) for _ in range(3))
        assert l1_distill_loss(a, b) == pytest.approx(l1_distill_loss(b, a))
        assert l1_distill_loss(a, b) >= 0.0
        assert l1_distill_loss(a, c) <= l1_distill_loss(a, b) + l1_distill_loss(b, c) + 1e-12
