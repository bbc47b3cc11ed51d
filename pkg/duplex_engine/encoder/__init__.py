"""Causal frame-rate conversion and the distillation loss."""

from duplex_engine.encoder.frontend import (  # noqa: F401
    FEATURE_DIM,
    FeatureVector,
    StreamingEncoder,
    concat_pairs_50_to_25,
    downsample_100_to_50,
    encode_frames,
    frame_projection,
    l1_distill_loss,
)
