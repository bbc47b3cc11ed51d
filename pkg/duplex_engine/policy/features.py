"""Per-block context features the policy decides on."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from duplex_engine.encoder.frontend import (
    ACTIVITY,
    ECHO,
    ENERGY,
    FEATURE_DIM,
    RELEVANCE,
    THIRD_PARTY,
    USER,
    FeatureVector,
)

BASE_FEATURES = (
    "env_activity",
    "env_energy",
    "speaker_none",
    "speaker_user",
    "speaker_third_party",
    "relevance",
    "echo_energy",
    "asst_playing",
    "text_done",
    "since_transition",
    "speaking",
)
BASE_DIM = len(BASE_FEATURES)
ECHO_INDEX = BASE_FEATURES.index("echo_energy")
SINCE_TRANSITION_SCALE = 25.0


def input_dim(history: int) -> int:
    return BASE_DIM * (history + 1)


@dataclass(frozen=True, slots=True, eq=False)
class BlockFeatures:
    """Context for one decision.

    Attributes:
        block_index: Block the decision is taken in.
        base: The block's own feature values (see BASE_FEATURES).
        history: Base vectors of the previous blocks, newest first, zero padded.
        speaking: Dialogue state during the block.
    """

    block_index: int
    base: np.ndarray
    history: np.ndarray
    speaking: bool

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.base, self.history])


def base_features(
    env_embeddings: Sequence[FeatureVector],
    *,
    playing: bool,
    text_done: bool,
    blocks_since_transition: int,
    speaking: bool,
) -> np.ndarray:
    """Summarise one block of the environment stream plus the engine's own state."""
    if env_embeddings:
        grid = np.concatenate([vec.values for vec in env_embeddings]).reshape(-1, FEATURE_DIM)
    else:
        grid = np.zeros((1, FEATURE_DIM), dtype=float)
    user = float(grid[:, USER].mean())
    third = float(grid[:, THIRD_PARTY].mean())
    values = np.array(
        [
            float(grid[:, ACTIVITY].mean()),
            float(grid[:, ENERGY].mean()),
            max(0.0, 1.0 - user - third),
            user,
            third,
            float(grid[:, RELEVANCE].max()),
            float(grid[:, ECHO].mean()),
            1.0 if playing else 0.0,
            1.0 if text_done else 0.0,
            min(max(blocks_since_transition, 0) / SINCE_TRANSITION_SCALE, 1.0),
            1.0 if speaking else 0.0,
        ],
        dtype=float,
    )
    if not np.all(np.isfinite(values)):
        raise ValueError("block features must be finite")
    return values


class FeatureHistory:
    """Rolling window of the last K base vectors."""

    def __init__(self, size: int) -> None:
        if size < 0:
            raise ValueError("history size must be non-negative")
        self.size = size
        self._window: deque[np.ndarray] = deque(maxlen=size or None)

    def snapshot(self) -> np.ndarray:
        out = np.zeros(BASE_DIM * self.size, dtype=float)
        if self.size == 0:
            return out
        for idx, vec in enumerate(reversed(self._window)):
            out[idx * BASE_DIM : (idx + 1) * BASE_DIM] = vec
        return out

    def push(self, base: np.ndarray) -> None:
        if self.size:
            self._window.append(np.asarray(base, dtype=float))


def stack_history(bases: Sequence[np.ndarray], history: int) -> np.ndarray:
    """Full policy inputs for a recorded run of base vectors, one row per block."""
    tracker = FeatureHistory(history)
    rows = []
    for base in bases:
        base = np.asarray(base, dtype=float)
        rows.append(np.concatenate([base, tracker.snapshot()]))
        tracker.push(base)
    if not rows:
        return np.zeros((0, input_dim(history)), dtype=float)
    return np.vstack(rows)


def mask_echo(matrix: np.ndarray) -> np.ndarray:
    """Copy of ``matrix`` with the echo feature zeroed in every history group."""
    masked = np.array(matrix, dtype=float, copy=True)
    width = masked.shape[-1]
    masked[..., ECHO_INDEX:width:BASE_DIM] = 0.0
    return masked
