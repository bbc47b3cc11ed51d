"""Unified per-block sequence of environment, assistant and token slots.

Per block the layout is::

    [TokenInput?] EnvEmbedding EnvEmbedding AsstEmbedding AsstEmbedding TokenLabel

The fed-back token opens the block because it was decided before the new
block's audio arrived.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from duplex_engine.encoder.frontend import EncoderConfig, DEFAULT_ENCODER, FeatureVector, StreamingEncoder
from duplex_engine.errors import LabelError, LayoutError
from duplex_engine.interleaver.labels import check_label_kinds
from duplex_engine.timebase import (
    BLANK_SYMBOL,
    THOUGHT_SYMBOL,
    DialogueState,
    StrategyKind,
    TimeBlock,
    Token,
    TokenKind,
    apply_token,
)

EMBEDDINGS_PER_FRAME_GROUP = 4


class SlotKind(str, Enum):
    ENV_EMBEDDING = "env_embedding"
    ASST_EMBEDDING = "asst_embedding"
    TOKEN_INPUT = "token_input"
    TOKEN_LABEL = "token_label"


@dataclass(eq=False, slots=True)
class SlotItem:
    """One position of the interleaved sequence.

    Attributes:
        kind: Slot type.
        payload: A feature vector for embedding slots, a token for token slots.
        block_index: Block the item belongs to.
        loss_weight: Training weight of a label item.
        slot: Position of an embedding within its stream and block.
    """

    kind: SlotKind
    payload: FeatureVector | Token
    block_index: int
    loss_weight: float = 1.0
    slot: int | None = None

    def __post_init__(self) -> None:
        embedding = self.kind in (SlotKind.ENV_EMBEDDING, SlotKind.ASST_EMBEDDING)
        if embedding and not isinstance(self.payload, FeatureVector):
            raise ValueError(f"{self.kind.value} items carry feature vectors")
        if not embedding and not isinstance(self.payload, Token):
            raise ValueError(f"{self.kind.value} items carry tokens")

    @property
    def token(self) -> Token:
        assert isinstance(self.payload, Token)
        return self.payload

    @property
    def vector(self) -> FeatureVector:
        assert isinstance(self.payload, FeatureVector)
        return self.payload


@dataclass(slots=True)
class InterleavedSequence:
    items: list[SlotItem] = field(default_factory=list)
    strategy: StrategyKind = StrategyKind.EXPLICIT

    def __len__(self) -> int:
        return len(self.items)

    def labels(self) -> list[SlotItem]:
        return [item for item in self.items if item.kind is SlotKind.TOKEN_LABEL]

    def loss_weights(self) -> list[float]:
        return [item.loss_weight for item in self.labels()]


def initial_input(strategy: StrategyKind, block_index: int) -> Token | None:
    """Token fed into the first block of a sequence."""
    if strategy in (StrategyKind.EXPLICIT, StrategyKind.EXPLICIT_NS):
        return Token(TokenKind.THINK, block_index)
    if strategy is StrategyKind.EXPLICIT_ASR:
        return Token(TokenKind.TEXT, block_index, BLANK_SYMBOL)
    return None


def feedback_input(
    strategy: StrategyKind, previous: Token, previous_weight: float, previous_state: DialogueState
) -> Token | None:
    """Token fed into block k given block k-1's label.

    Args:
        strategy: Thinking strategy.
        previous: Label of the previous block.
        previous_weight: Loss weight of that label.
        previous_state: Dialogue state during the previous block.

    Returns:
        The input token, or None when the strategy feeds nothing back.
    """
    if strategy in (StrategyKind.EXPLICIT, StrategyKind.EXPLICIT_ASR):
        return previous
    if strategy is StrategyKind.EXPLICIT_NS:
        if previous.kind is TokenKind.TEXT:
            return previous
        if previous.kind is TokenKind.SHIFT and previous_weight > 0:
            return previous
        return Token(TokenKind.THINK, previous.block_index)
    if strategy is StrategyKind.IMPLICIT:
        if previous.kind is TokenKind.TEXT and previous_state.speaking:
            return previous
        return None
    # implicit with streaming transcripts
    if (
        previous.kind is TokenKind.TEXT
        and previous_state.speaking
        and previous.symbol != THOUGHT_SYMBOL
    ):
        return previous
    return None


def _embeddings(encoder: StreamingEncoder, frames: Sequence, block_index: int) -> list[FeatureVector]:
    if len(frames) % EMBEDDINGS_PER_FRAME_GROUP != 0:
        raise LabelError(
            f"block {block_index}: {len(frames)} frames do not form whole 40 ms embeddings"
        )
    return encoder.push(frames)


def build_sequence(
    blocks: Sequence[TimeBlock],
    transcript_labels: Sequence[Token],
    strategy: StrategyKind,
    loss_weights: Sequence[float] | None = None,
    *,
    encoder_cfg: EncoderConfig = DEFAULT_ENCODER,
) -> InterleavedSequence:
    """Interleave both streams and the token stream into one sequence.

    Args:
        blocks: Consecutive time blocks.
        transcript_labels: One gold token per block, aligned by block index.
        strategy: Thinking strategy, deciding the label inventory and feedback.
        loss_weights: Optional per-label weights (default 1.0).
        encoder_cfg: Encoder parameters for the embeddings.

    Returns:
        The interleaved sequence.

    Raises:
        LabelError: Misaligned lengths or indices, token kinds the strategy does
            not use, or negative weights outside the negative-sample scheme.
    """
    if len(blocks) != len(transcript_labels):
        raise LabelError(f"{len(blocks)} blocks but {len(transcript_labels)} labels")
    weights = list(loss_weights) if loss_weights is not None else [1.0] * len(blocks)
    if len(weights) != len(blocks):
        raise LabelError(f"{len(blocks)} blocks but {len(weights)} loss weights")
    if strategy is not StrategyKind.EXPLICIT_NS and any(w < 0 for w in weights):
        raise LabelError(f"negative loss weights are not used by the {strategy.value} strategy")
    check_label_kinds(transcript_labels, strategy)

    env_encoder = StreamingEncoder(encoder_cfg)
    asst_encoder = StreamingEncoder(encoder_cfg)
    items: list[SlotItem] = []
    state = DialogueState()
    previous: tuple[Token, float, DialogueState] | None = None
    for position, (block, label, weight) in enumerate(zip(blocks, transcript_labels, weights)):
        k = block.block_index
        if position > 0 and k != blocks[position - 1].block_index + 1:
            raise LabelError(f"block {k} does not follow block {blocks[position - 1].block_index}")
        if label.block_index != k:
            raise LabelError(f"label for block {label.block_index} aligned with block {k}")
        if block.emitted_token is not None and block.emitted_token != label:
            raise LabelError(f"block {k} emitted {block.emitted_token.label}, label is {label.label}")

        if previous is None:
            fed = initial_input(strategy, k)
        else:
            fed = feedback_input(strategy, *previous)
        if fed is not None:
            items.append(SlotItem(SlotKind.TOKEN_INPUT, fed, k))
        for slot, vector in enumerate(_embeddings(env_encoder, block.env_frames, k)):
            items.append(SlotItem(SlotKind.ENV_EMBEDDING, vector, k, slot=slot))
        for slot, vector in enumerate(_embeddings(asst_encoder, block.asst_frames, k)):
            items.append(SlotItem(SlotKind.ASST_EMBEDDING, vector, k, slot=slot))
        items.append(SlotItem(SlotKind.TOKEN_LABEL, label, k, loss_weight=float(weight)))

        previous = (label, float(weight), state)
        state = apply_token(state, label)
    return InterleavedSequence(items=items, strategy=strategy)


def _frames_of(vectors: list[FeatureVector]) -> tuple:
    frames: list = []
    for vector in vectors:
        frames.extend(vector.source)
    return tuple(frames)


def deinterleave(
    seq: InterleavedSequence, *, embeddings_per_block: int = 2
) -> tuple[list[TimeBlock], list[Token]]:
    """Recover blocks (carrying their labels as emitted tokens) and labels.

    Raises:
        LayoutError: The first item that breaks the per-block layout.
    """
    blocks: list[TimeBlock] = []
    labels: list[Token] = []
    items = seq.items
    explicit = seq.strategy.is_explicit_family
    idx = 0
    expected_block: int | None = None
    while idx < len(items):
        first = items[idx]
        k = first.block_index
        if expected_block is not None and k != expected_block:
            raise LayoutError(idx, f"expected block {expected_block}, found block {k}")

        fed: Token | None = None
        fed_index = idx
        if first.kind is SlotKind.TOKEN_INPUT:
            fed = first.token
            idx += 1
        elif explicit:
            raise LayoutError(idx, f"block {k} has no token input under the {seq.strategy.value} strategy")

        env: list[FeatureVector] = []
        asst: list[FeatureVector] = []
        for stream_kind, bucket in ((SlotKind.ENV_EMBEDDING, env), (SlotKind.ASST_EMBEDDING, asst)):
            for slot in range(embeddings_per_block):
                if idx >= len(items):
                    raise LayoutError(idx, f"sequence ends inside block {k}")
                item = items[idx]
                if item.kind is not stream_kind or item.block_index != k or item.slot != slot:
                    raise LayoutError(
                        idx, f"expected {stream_kind.value} slot {slot} of block {k}, found {item.kind.value}"
                    )
                bucket.append(item.vector)
                idx += 1

        if idx >= len(items):
            raise LayoutError(idx, f"sequence ends before the label of block {k}")
        label_item = items[idx]
        if label_item.kind is not SlotKind.TOKEN_LABEL or label_item.block_index != k:
            raise LayoutError(idx, f"expected the label of block {k}, found {label_item.kind.value}")
        label = label_item.token

        if seq.strategy in (StrategyKind.EXPLICIT, StrategyKind.EXPLICIT_ASR) and labels and fed != labels[-1]:
            raise LayoutError(fed_index, f"token input of block {k} differs from the previous label")

        blocks.append(
            TimeBlock(
                block_index=k,
                env_frames=_frames_of(env),
                asst_frames=_frames_of(asst),
                emitted_token=label,
                frames_per_block=EMBEDDINGS_PER_FRAME_GROUP * embeddings_per_block,
            )
        )
        labels.append(label)
        idx += 1
        expected_block = k + 1
    return blocks, labels


def attach_tokens(blocks: Sequence[TimeBlock], labels: Sequence[Token]) -> list[TimeBlock]:
    """Blocks with their labels recorded as emitted tokens."""
    return [
        TimeBlock(block.block_index, block.env_frames, block.asst_frames, label, block.frames_per_block)
        for block, label in zip(blocks, labels)
    ]
