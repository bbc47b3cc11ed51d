"""Causal feature pipeline: 100 Hz frames -> 50 Hz vectors -> 25 Hz embeddings.

Each frame is projected onto a fixed 8-dimensional feature layout. Pairs of
frames are merged by a causal two-tap average (stride 2), rolling activity
averages are attached at 50 Hz, and adjacent 50 Hz vectors are concatenated
into one 25 Hz embedding of dimension 16.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from duplex_engine.timebase import Frame, Speaker

logger = logging.getLogger(__name__)

FEATURE_DIM = 8
FEATURE_NAMES = (
    "activity",
    "energy",
    "user",
    "third_party",
    "echo_energy",
    "relevance",
    "activity_ema_fast",
    "activity_ema_slow",
)
ACTIVITY, ENERGY, USER, THIRD_PARTY, ECHO, RELEVANCE, EMA_FAST, EMA_SLOW = range(FEATURE_DIM)

_VOICED_SPEAKERS = frozenset({Speaker.USER, Speaker.THIRD_PARTY, Speaker.ASSISTANT})


@dataclass(frozen=True, slots=True)
class EncoderConfig:
    """Fixed pipeline parameters.

    Attributes:
        tap_weights: Weights of the (older, newer) frame in each stride-2 merge.
        fast_half_life_ms: Half-life of the short activity average.
        slow_half_life_ms: Half-life of the medium activity average.
        step_ms: Spacing of the 50 Hz vectors the averages run over.
    """

    tap_weights: tuple[float, float] = (0.5, 0.5)
    fast_half_life_ms: float = 160.0
    slow_half_life_ms: float = 640.0
    step_ms: float = 20.0

    def decay(self, half_life_ms: float) -> float:
        return 1.0 - math.pow(0.5, self.step_ms / half_life_ms)


DEFAULT_ENCODER = EncoderConfig()


@dataclass(eq=False, slots=True)
class FeatureVector:
    """One encoder output.

    Attributes:
        values: The feature values.
        source: Frames this vector summarises, in time order.
        padded: True when a repeated pad frame went into the vector.
    """

    values: np.ndarray
    source: tuple[Frame, ...] = ()
    padded: bool = False

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def frame_projection(frame: Frame) -> np.ndarray:
    """Project one frame onto the feature layout.

    The rolling-average slots hold the frame's own activity, which is what the
    50 Hz stage produces for a constant input. Echo-only frames contribute only
    to the echo slot.
    """
    voiced = frame.speaker in _VOICED_SPEAKERS
    activity = frame.activity if voiced else 0.0
    values = np.zeros(FEATURE_DIM, dtype=float)
    values[ACTIVITY] = activity
    values[ENERGY] = frame.energy if voiced else 0.0
    values[USER] = 1.0 if frame.speaker is Speaker.USER else 0.0
    values[THIRD_PARTY] = 1.0 if frame.speaker is Speaker.THIRD_PARTY else 0.0
    values[ECHO] = frame.echo_energy
    values[RELEVANCE] = frame.relevance if voiced else 0.0
    values[EMA_FAST] = activity
    values[EMA_SLOW] = activity
    return values


class _Downsampler:
    """Stride-2 merge plus rolling averages; carries state between calls."""

    def __init__(self, cfg: EncoderConfig = DEFAULT_ENCODER) -> None:
        self._cfg = cfg
        self._alpha_fast = cfg.decay(cfg.fast_half_life_ms)
        self._alpha_slow = cfg.decay(cfg.slow_half_life_ms)
        self._ema_fast: float | None = None
        self._ema_slow: float | None = None

    def merge(self, older: Frame, newer: Frame, *, padded: bool = False) -> FeatureVector:
        w_old, w_new = self._cfg.tap_weights
        values = w_old * frame_projection(older) + w_new * frame_projection(newer)
        activity = float(values[ACTIVITY])
        if self._ema_fast is None or self._ema_slow is None:
            self._ema_fast = activity
            self._ema_slow = activity
        else:
            self._ema_fast += self._alpha_fast * (activity - self._ema_fast)
            self._ema_slow += self._alpha_slow * (activity - self._ema_slow)
        values[EMA_FAST] = self._ema_fast
        values[EMA_SLOW] = self._ema_slow
        source = (older,) if padded else (older, newer)
        return FeatureVector(values=values, source=source, padded=padded)


def downsample_100_to_50(
    frames: Sequence[Frame], cfg: EncoderConfig = DEFAULT_ENCODER
) -> list[FeatureVector]:
    """Halve the frame rate with a causal stride-2 merge.

    An odd-length input is padded by repeating its last frame; the vector built
    from the pad is flagged ``padded``.

    Args:
        frames: 10 ms frames in time order.
        cfg: Pipeline parameters.

    Returns:
        One vector per 20 ms; empty input gives an empty list.
    """
    if not frames:
        return []
    items = list(frames)
    pad = len(items) % 2 == 1
    if pad:
        logger.warning("Odd frame count %d; repeating frame %d as padding", len(items), items[-1].t_index)
        items.append(items[-1])
    downsampler = _Downsampler(cfg)
    vectors: list[FeatureVector] = []
    for idx in range(0, len(items), 2):
        last_pair = pad and idx == len(items) - 2
        vectors.append(downsampler.merge(items[idx], items[idx + 1], padded=last_pair))
    return vectors


def concat_pairs_50_to_25(vecs: Sequence[FeatureVector]) -> list[FeatureVector]:
    """Concatenate adjacent 50 Hz vectors into 25 Hz embeddings of twice the dimension.

    Raises:
        ValueError: The input length is odd or the dimensions differ.
    """
    if len(vecs) % 2 != 0:
        raise ValueError(f"concat_pairs_50_to_25 needs an even number of vectors, got {len(vecs)}")
    out: list[FeatureVector] = []
    for first, second in zip(vecs[0::2], vecs[1::2]):
        if first.dim != second.dim:
            raise ValueError(f"dimension mismatch {first.dim} vs {second.dim}")
        out.append(
            FeatureVector(
                values=np.concatenate([first.values, second.values]),
                source=first.source + second.source,
                padded=first.padded or second.padded,
            )
        )
    return out


def encode_frames(frames: Sequence[Frame], cfg: EncoderConfig = DEFAULT_ENCODER) -> list[FeatureVector]:
    """Full pipeline from 10 ms frames to 25 Hz embeddings."""
    return concat_pairs_50_to_25(downsample_100_to_50(frames, cfg))


@dataclass(slots=True)
class StreamingEncoder:
    """Incremental encoder for one stream.

    Pushing frames block by block yields exactly what ``encode_frames`` returns
    for the same prefix.
    """

    cfg: EncoderConfig = DEFAULT_ENCODER
    _downsampler: _Downsampler | None = None
    _pending_frame: Frame | None = None
    _pending_vector: FeatureVector | None = None
    emitted: int = field(default=0)

    def __post_init__(self) -> None:
        if self._downsampler is None:
            self._downsampler = _Downsampler(self.cfg)

    def push(self, frames: Iterable[Frame]) -> list[FeatureVector]:
        assert self._downsampler is not None
        out: list[FeatureVector] = []
        for frame in frames:
            if self._pending_frame is None:
                self._pending_frame = frame
                continue
            vector = self._downsampler.merge(self._pending_frame, frame)
            self._pending_frame = None
            if self._pending_vector is None:
                self._pending_vector = vector
                continue
            out.extend(concat_pairs_50_to_25([self._pending_vector, vector]))
            self._pending_vector = None
        self.emitted += len(out)
        return out


def _as_matrix(seq: Sequence[FeatureVector] | np.ndarray, name: str) -> np.ndarray:
    if isinstance(seq, np.ndarray):
        matrix = np.asarray(seq, dtype=float)
    elif len(seq) == 0:
        return np.zeros((0, 0), dtype=float)
    else:
        rows = [vec.values if isinstance(vec, FeatureVector) else np.asarray(vec, dtype=float) for vec in seq]
        dims = {row.shape[0] for row in rows}
        if len(dims) != 1:
            raise ValueError(f"{name} vectors have mixed dimensions {sorted(dims)}")
        matrix = np.vstack(rows)
    if matrix.ndim != 2:
        raise ValueError(f"{name} must be a sequence of vectors")
    return matrix


def l1_distill_loss(
    student: Sequence[FeatureVector] | np.ndarray,
    teacher: Sequence[FeatureVector] | np.ndarray,
    align: np.ndarray | None = None,
) -> float:
    """Mean absolute difference between student outputs and aligned target features.

    Args:
        student: Sequence of student vectors.
        teacher: Sequence of target vectors, same length as ``student``.
        align: Optional (teacher_dim, student_dim) linear map applied to the targets.

    Returns:
        The mean |student - teacher @ align| over all elements; 0.0 for two empty sequences.

    Raises:
        ValueError: Lengths or (aligned) dimensions differ.
    """
    s = _as_matrix(student, "student")
    t = _as_matrix(teacher, "teacher")
    if s.shape[0] != t.shape[0]:
        raise ValueError(f"sequence lengths differ: {s.shape[0]} vs {t.shape[0]}")
    if s.shape[0] == 0:
        return 0.0
    if align is not None:
        align = np.asarray(align, dtype=float)
        if align.shape[0] != t.shape[1]:
            raise ValueError(f"alignment expects dimension {align.shape[0]}, targets have {t.shape[1]}")
        t = t @ align
    if s.shape != t.shape:
        raise ValueError(f"shape mismatch: student {s.shape} vs teacher {t.shape}")
    return float(np.mean(np.abs(s - t)))
