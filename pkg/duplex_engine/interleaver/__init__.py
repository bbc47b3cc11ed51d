"""Two-stream interleaving and per-strategy label generation."""

from duplex_engine.interleaver.labels import (  # noqa: F401
    LabelEvents,
    ResponseSpan,
    TransitionMark,
    UtteranceSpan,
    label_scheme,
)
from duplex_engine.interleaver.sequence import (  # noqa: F401
    InterleavedSequence,
    SlotItem,
    SlotKind,
    build_sequence,
    deinterleave,
)
