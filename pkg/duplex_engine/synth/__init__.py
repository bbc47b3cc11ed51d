"""Synthesizer interleave contract and playback buffer."""

from duplex_engine.synth.scheduler import (  # noqa: F401
    PlaybackState,
    SpeechChunk,
    advance_block,
    feed_text_token,
    finish_response,
    flush_on_interrupt,
)
