"""Timing constants shared by every module."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field, model_validator


class TimingConfig(BaseModel):
    """Block and synthesis timing.

    Attributes:
        block_ms: Scheduling quantum; one token is emitted per block.
        n_text: Text tokens consumed per synthesis call.
        m_speech: Speech tokens produced per synthesis call.
        speech_token_ms: Duration of one speech token.
        frame_ms: Duration of one audio-proxy frame (100 Hz).
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    block_ms: int = Field(default=80, gt=0)
    n_text: int = Field(default=4, ge=1)
    m_speech: int = Field(default=12, ge=0)
    speech_token_ms: int = Field(default=40, gt=0)
    frame_ms: int = Field(default=10, gt=0)

    @model_validator(mode="after")
    def check_frame_grid(self) -> "TimingConfig":
        if self.block_ms % self.frame_ms != 0:
            raise ValueError(
                f"block_ms={self.block_ms} is not a multiple of frame_ms={self.frame_ms}"
            )
        return self

    @property
    def frames_per_block(self) -> int:
        return self.block_ms // self.frame_ms

    @property
    def embeddings_per_block(self) -> int:
        """Encoder outputs per block at 25 Hz (one per 40 ms)."""
        return self.block_ms // 40
