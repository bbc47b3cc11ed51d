"""Training label sequences for the five thinking strategies."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from duplex_engine.errors import LabelError
from duplex_engine.schemas.scenario import Direction
from duplex_engine.timebase import (
    BLANK_SYMBOL,
    THOUGHT_SYMBOL,
    State,
    StrategyKind,
    TimeBlock,
    Token,
    TokenKind,
)

DEFAULT_NS_WEIGHT = 0.1

LABEL_KINDS: dict[StrategyKind, frozenset[TokenKind]] = {
    StrategyKind.IMPLICIT: frozenset({TokenKind.TEXT, TokenKind.LISTEN, TokenKind.SPEAK}),
    StrategyKind.EXPLICIT: frozenset({TokenKind.TEXT, TokenKind.THINK, TokenKind.SHIFT}),
    StrategyKind.IMPLICIT_ASR: frozenset({TokenKind.TEXT, TokenKind.SHIFT}),
    StrategyKind.EXPLICIT_ASR: frozenset({TokenKind.TEXT, TokenKind.SHIFT}),
    # Think shows up in transcripts of a running negative-sample policy.
    StrategyKind.EXPLICIT_NS: frozenset({TokenKind.TEXT, TokenKind.THINK, TokenKind.SHIFT}),
}


@dataclass(frozen=True, slots=True)
class UtteranceSpan:
    """Environment speech with one transcript symbol per block."""

    first_block: int
    symbols: tuple[int, ...]

    @property
    def last_block(self) -> int:
        return self.first_block + len(self.symbols) - 1


@dataclass(frozen=True, slots=True)
class TransitionMark:
    block_index: int
    direction: Direction


@dataclass(frozen=True, slots=True)
class ResponseSpan:
    """Assistant reply text, one symbol per block."""

    first_block: int
    symbols: tuple[int, ...]

    @property
    def last_block(self) -> int:
        return self.first_block + len(self.symbols) - 1


@dataclass(frozen=True, slots=True)
class LabelEvents:
    utterances: tuple[UtteranceSpan, ...] = ()
    transitions: tuple[TransitionMark, ...] = ()
    responses: tuple[ResponseSpan, ...] = ()
    initial_state: State = State.LISTENING

    def transition_at(self, block_index: int) -> TransitionMark | None:
        for mark in self.transitions:
            if mark.block_index == block_index:
                return mark
        return None

    def response_symbol_at(self, block_index: int) -> int | None:
        for span in self.responses:
            if span.first_block <= block_index <= span.last_block:
                return span.symbols[block_index - span.first_block]
        return None

    def utterance_symbol_at(self, block_index: int) -> int | None:
        for span in self.utterances:
            if span.first_block <= block_index <= span.last_block:
                return span.symbols[block_index - span.first_block]
        return None

    def last_block(self) -> int:
        ends = [span.last_block for span in self.utterances]
        ends += [span.last_block for span in self.responses]
        ends += [mark.block_index for mark in self.transitions]
        return max(ends, default=-1)


def check_label_kinds(tokens: Sequence[Token], strategy: StrategyKind) -> None:
    """Reject tokens whose kind the strategy never emits."""
    allowed = LABEL_KINDS[strategy]
    for tok in tokens:
        if tok.kind not in allowed:
            raise LabelError(
                f"block {tok.block_index}: {tok.kind.value} tokens are not used by the {strategy.value} strategy"
            )


def stay_token(strategy: StrategyKind, state: State, block_index: int, asr_symbol: int | None) -> Token:
    """Token for a block in which nothing changes and no reply text is due."""
    if strategy is StrategyKind.IMPLICIT:
        kind = TokenKind.SPEAK if state is State.SPEAKING else TokenKind.LISTEN
        return Token(kind, block_index)
    if strategy.uses_asr_labels:
        if state is State.SPEAKING:
            return Token(TokenKind.TEXT, block_index, THOUGHT_SYMBOL)
        symbol = asr_symbol if asr_symbol is not None else BLANK_SYMBOL
        return Token(TokenKind.TEXT, block_index, symbol)
    return Token(TokenKind.THINK, block_index)


def switch_token(strategy: StrategyKind, state: State, block_index: int) -> Token:
    if strategy is StrategyKind.IMPLICIT:
        kind = TokenKind.LISTEN if state is State.SPEAKING else TokenKind.SPEAK
        return Token(kind, block_index)
    return Token(TokenKind.SHIFT, block_index)


def _check_range(events: LabelEvents, n_blocks: int) -> None:
    last = events.last_block()
    if last >= n_blocks:
        raise LabelError(f"label events reach block {last}, conversation has {n_blocks} blocks")
    for span in (*events.utterances, *events.responses):
        if span.first_block < 0:
            raise LabelError(f"span starts at negative block {span.first_block}")
        if any(symbol < 2 for symbol in span.symbols):
            raise LabelError("symbols 0 and 1 are reserved for blank and thought")


def label_scheme(
    blocks: Sequence[TimeBlock] | int,
    events: LabelEvents,
    strategy: StrategyKind,
    *,
    ns_weight: float = DEFAULT_NS_WEIGHT,
) -> list[tuple[Token, float]]:
    """Gold (token, loss weight) per block for one strategy.

    Args:
        blocks: The conversation blocks, or just their count.
        events: Utterance spans, ground-truth transitions and reply spans.
        strategy: Thinking strategy whose label inventory is used.
        ns_weight: Magnitude of the negative weight of the negative-sample scheme.

    Returns:
        One (token, weight) pair per block.

    Raises:
        LabelError: Unknown strategy, events outside the conversation, a reply
            span outside the speaking state or a transition in the wrong direction.
    """
    if not isinstance(strategy, StrategyKind):
        raise LabelError(f"unknown strategy {strategy!r}")
    if ns_weight <= 0:
        raise LabelError("ns_weight must be positive")
    n_blocks = blocks if isinstance(blocks, int) else len(blocks)
    _check_range(events, n_blocks)

    labels: list[tuple[Token, float]] = []
    state = events.initial_state
    for k in range(n_blocks):
        mark = events.transition_at(k)
        if mark is not None:
            expected = Direction.TO_SPEAKING if state is State.LISTENING else Direction.TO_LISTENING
            if mark.direction is not expected:
                raise LabelError(f"block {k}: transition {mark.direction.value} while {state.value}")
            labels.append((switch_token(strategy, state, k), 1.0))
            state = State.SPEAKING if state is State.LISTENING else State.LISTENING
            continue
        symbol = events.response_symbol_at(k)
        if symbol is not None:
            if state is not State.SPEAKING:
                raise LabelError(f"block {k}: reply text while listening")
            labels.append((Token(TokenKind.TEXT, k, symbol), 1.0))
            continue
        if strategy is StrategyKind.EXPLICIT_NS:
            labels.append((Token(TokenKind.SHIFT, k), -ns_weight))
            continue
        labels.append((stay_token(strategy, state, k, events.utterance_symbol_at(k)), 1.0))
    return labels
