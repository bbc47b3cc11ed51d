"""Frames, blocks, tokens, dialogue states and the timing arithmetic behind them.

All durations are integer milliseconds. A conversation is a sequence of
fixed-size time blocks; each block groups ``frames_per_block`` 10 ms frames of
the environment stream and the same wall-clock interval of the assistant
stream, and carries exactly one emitted token.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction

from duplex_engine.schemas.timing import TimingConfig

BLANK_SYMBOL = 0
THOUGHT_SYMBOL = 1
FIRST_WORD_SYMBOL = 2
DEFAULT_FRAMES_PER_BLOCK = TimingConfig().frames_per_block


class Speaker(str, Enum):
    NONE = "none"
    USER = "user"
    THIRD_PARTY = "third_party"
    ASSISTANT_ECHO = "assistant_echo"
    ASSISTANT = "assistant"


class TokenKind(str, Enum):
    TEXT = "text"
    THINK = "think"
    SHIFT = "shift"
    LISTEN = "listen"
    SPEAK = "speak"


class State(str, Enum):
    LISTENING = "listening"
    SPEAKING = "speaking"


class StrategyKind(str, Enum):
    IMPLICIT = "implicit"
    EXPLICIT = "explicit"
    IMPLICIT_ASR = "implicit_asr"
    EXPLICIT_ASR = "explicit_asr"
    EXPLICIT_NS = "explicit_ns"

    @property
    def is_explicit_family(self) -> bool:
        return self in (StrategyKind.EXPLICIT, StrategyKind.EXPLICIT_ASR, StrategyKind.EXPLICIT_NS)

    @property
    def uses_asr_labels(self) -> bool:
        return self in (StrategyKind.IMPLICIT_ASR, StrategyKind.EXPLICIT_ASR)


@dataclass(frozen=True, slots=True)
class Frame:
    """One 10 ms audio-proxy frame.

    Attributes:
        t_index: Position on the 10 ms grid.
        activity: Voice-activity proxy in [0, 1].
        speaker: Who produces the dominant sound in this frame.
        relevance: Semantic relatedness of the current utterance to the dialogue.
        energy: Loudness of the dominant source.
        echo_energy: Loudness of the assistant's own echo mixed into this frame.
    """

    t_index: int
    activity: float = 0.0
    speaker: Speaker = Speaker.NONE
    relevance: float = 0.0
    energy: float = 0.0
    echo_energy: float = 0.0

    def __post_init__(self) -> None:
        if self.t_index < 0:
            raise ValueError(f"t_index must be non-negative, got {self.t_index}")
        if not 0.0 <= self.activity <= 1.0:
            raise ValueError(f"activity must lie in [0, 1], got {self.activity}")
        if not 0.0 <= self.relevance <= 1.0:
            raise ValueError(f"relevance must lie in [0, 1], got {self.relevance}")
        if self.energy < 0.0 or self.echo_energy < 0.0:
            raise ValueError("energies must be non-negative")
        if self.activity == 0.0 and self.speaker is not Speaker.NONE:
            raise ValueError("a silent frame cannot carry a speaker")

    @classmethod
    def silent(cls, t_index: int, echo_energy: float = 0.0) -> "Frame":
        return cls(t_index=t_index, echo_energy=echo_energy)


@dataclass(frozen=True, slots=True)
class Token:
    """A control or text token emitted in one block."""

    kind: TokenKind
    block_index: int
    symbol: int | None = None

    def __post_init__(self) -> None:
        if self.block_index < 0:
            raise ValueError(f"block_index must be non-negative, got {self.block_index}")
        if self.kind is TokenKind.TEXT and self.symbol is None:
            raise ValueError("text tokens need a symbol id")
        if self.kind is not TokenKind.TEXT and self.symbol is not None:
            raise ValueError(f"{self.kind.value} tokens carry no symbol")

    @property
    def is_control(self) -> bool:
        return self.kind is not TokenKind.TEXT

    @property
    def label(self) -> str:
        if self.kind is TokenKind.TEXT:
            return f"text:{self.symbol}"
        return self.kind.value

    def at(self, block_index: int) -> "Token":
        return replace(self, block_index=block_index)

    @classmethod
    def parse(cls, label: str, block_index: int) -> "Token":
        """Inverse of ``label``."""
        if label.startswith("text:"):
            return cls(TokenKind.TEXT, block_index, int(label.split(":", 1)[1]))
        return cls(TokenKind(label), block_index)


@dataclass(frozen=True, slots=True)
class TimeBlock:
    """Both streams over one block interval plus the token emitted in it.

    Each stream holds exactly ``frames_per_block`` consecutive frames starting
    at frame ``block_index * frames_per_block``.
    """

    block_index: int
    env_frames: tuple[Frame, ...]
    asst_frames: tuple[Frame, ...]
    emitted_token: Token | None = None
    frames_per_block: int = field(default=DEFAULT_FRAMES_PER_BLOCK, compare=False, repr=False)

    def __post_init__(self) -> None:
        for name, frames in (("env", self.env_frames), ("assistant", self.asst_frames)):
            if len(frames) != self.frames_per_block:
                raise ValueError(
                    f"block {self.block_index}: {name} has {len(frames)} frames, "
                    f"expected {self.frames_per_block}"
                )
        first = self.block_index * self.frames_per_block
        for j, (env, asst) in enumerate(zip(self.env_frames, self.asst_frames)):
            if env.t_index != asst.t_index:
                raise ValueError(
                    f"block {self.block_index}: streams cover different intervals "
                    f"({env.t_index} vs {asst.t_index})"
                )
            if env.t_index != first + j:
                raise ValueError(f"block {self.block_index}: frame {env.t_index} lies outside the block")
        if self.emitted_token is not None and self.emitted_token.block_index != self.block_index:
            raise ValueError(f"block {self.block_index}: token belongs to another block")


@dataclass(frozen=True, slots=True)
class DialogueState:
    state: State = State.LISTENING
    since_block: int = 0

    @property
    def speaking(self) -> bool:
        return self.state is State.SPEAKING


def onset_latency(cfg: TimingConfig) -> int:
    """Delay between entering Speaking and the first audible speech."""
    return cfg.n_text * cfg.block_ms


def speech_chunk_duration(cfg: TimingConfig) -> int:
    """Audio produced by one synthesis call."""
    return cfg.m_speech * cfg.speech_token_ms


def blocks_per_second(cfg: TimingConfig) -> Fraction:
    if cfg.block_ms <= 0:
        raise ValueError("block duration must be positive")
    return Fraction(1000, cfg.block_ms)


def block_start_ms(block_index: int, cfg: TimingConfig) -> int:
    return block_index * cfg.block_ms


def block_end_ms(block_index: int, cfg: TimingConfig) -> int:
    return (block_index + 1) * cfg.block_ms


def block_of_ms(ms: int, cfg: TimingConfig) -> int:
    """Index of the block containing the instant ``ms``."""
    return ms // cfg.block_ms


def last_block_before(ms: int, cfg: TimingConfig) -> int:
    """Index of the block holding the last frame that ends at or before ``ms``."""
    return (ms - 1) // cfg.block_ms


def transcript_duration_ms(n_blocks: int, cfg: TimingConfig) -> int:
    return n_blocks * cfg.block_ms


def is_transition(state: DialogueState, token: Token) -> bool:
    if token.kind is TokenKind.SHIFT:
        return True
    if token.kind is TokenKind.SPEAK:
        return state.state is State.LISTENING
    if token.kind is TokenKind.LISTEN:
        return state.state is State.SPEAKING
    return False


def apply_token(state: DialogueState, token: Token) -> DialogueState:
    """Advance the state machine by one emitted token.

    The new state holds from the next block boundary on.
    """
    if not is_transition(state, token):
        return state
    flipped = State.SPEAKING if state.state is State.LISTENING else State.LISTENING
    return DialogueState(state=flipped, since_block=token.block_index + 1)
