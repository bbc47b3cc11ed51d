"""Two-layer scorer mapping block features to STAY / SWITCH / TEXT."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, replace
from enum import IntEnum
from pathlib import Path
from typing import Protocol

import numpy as np

from duplex_engine.errors import ArtifactError
from duplex_engine.policy.features import BlockFeatures, input_dim, mask_echo
from duplex_engine.schemas.artifact import canonical_json, read_model, write_model
from duplex_engine.schemas.model import PolicyModelFile
from duplex_engine.timebase import StrategyKind

logger = logging.getLogger(__name__)

PARAM_NAMES = ("w1", "b1", "w2", "b2")


class PolicyAction(IntEnum):
    """Strategy-neutral actions; the order fixes argmax tie-breaking."""

    STAY = 0
    SWITCH = 1
    TEXT = 2


N_ACTIONS = len(PolicyAction)


@dataclass(frozen=True, slots=True)
class PreferencePair:
    context: BlockFeatures
    chosen: PolicyAction
    rejected: PolicyAction

    def __post_init__(self) -> None:
        if self.chosen == self.rejected:
            raise ValueError("a preference pair needs two different actions")


@dataclass(slots=True, eq=False)
class PolicyModel:
    """Parameters of the scorer: tanh hidden layer, three logits.

    Attributes:
        w1: (hidden, input_dim) input weights.
        b1: (hidden,) hidden bias.
        w2: (3, hidden) output weights.
        b2: (3,) output bias.
        strategy: Thinking strategy the model renders actions for.
        history: Previous blocks in the input.
        use_echo: When false the echo feature is zeroed before the forward pass.
        version: Free-form tag.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    strategy: StrategyKind = StrategyKind.EXPLICIT
    history: int = 8
    use_echo: bool = True
    version: str = "0"

    @classmethod
    def initialize(
        cls,
        *,
        hidden: int = 16,
        history: int = 8,
        strategy: StrategyKind = StrategyKind.EXPLICIT,
        seed: int = 0,
        scale: float = 0.1,
        use_echo: bool = True,
    ) -> "PolicyModel":
        rng = np.random.default_rng(seed)
        dim = input_dim(history)
        return cls(
            w1=rng.normal(0.0, scale, size=(hidden, dim)),
            b1=np.zeros(hidden),
            w2=rng.normal(0.0, scale, size=(N_ACTIONS, hidden)),
            b2=np.zeros(N_ACTIONS),
            strategy=strategy,
            history=history,
            use_echo=use_echo,
        )

    @classmethod
    def zeros(cls, *, hidden: int = 16, history: int = 8, strategy: StrategyKind = StrategyKind.EXPLICIT) -> "PolicyModel":
        return cls.initialize(hidden=hidden, history=history, strategy=strategy, scale=0.0)

    @property
    def input_dim(self) -> int:
        return int(self.w1.shape[1])

    @property
    def hidden(self) -> int:
        return int(self.w1.shape[0])

    def params(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def with_params(self, params: dict[str, np.ndarray]) -> "PolicyModel":
        return replace(self, **{name: np.array(params[name], dtype=float) for name in PARAM_NAMES})

    def copy(self) -> "PolicyModel":
        return self.with_params(self.params())

    def check_finite(self) -> None:
        for name, value in self.params().items():
            if not np.all(np.isfinite(value)):
                raise ValueError(f"parameter {name} is not finite")


def _as_inputs(model: PolicyModel, features: BlockFeatures | np.ndarray) -> np.ndarray:
    x = features.vector if isinstance(features, BlockFeatures) else np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != model.input_dim:
        raise ValueError(f"model expects {model.input_dim} features, got {x.shape[1]}")
    return mask_echo(x) if not model.use_echo else x


@dataclass(slots=True)
class ForwardCache:
    x: np.ndarray
    hidden: np.ndarray
    logits: np.ndarray
    log_probs: np.ndarray


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def forward_batch(model: PolicyModel, x: BlockFeatures | np.ndarray) -> ForwardCache:
    """Forward pass over a batch of inputs, keeping what backward needs."""
    model.check_finite()
    inputs = _as_inputs(model, x)
    hidden = np.tanh(inputs @ model.w1.T + model.b1)
    logits = hidden @ model.w2.T + model.b2
    return ForwardCache(x=inputs, hidden=hidden, logits=logits, log_probs=log_softmax(logits))


def forward(model: PolicyModel, features: BlockFeatures | np.ndarray) -> np.ndarray:
    """Action probabilities for one block (order STAY, SWITCH, TEXT).

    Raises:
        ValueError: Wrong input dimension or non-finite parameters.
    """
    cache = forward_batch(model, features)
    return np.exp(cache.log_probs[0])


def backward(model: PolicyModel, cache: ForwardCache, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a loss with respect to the parameters, given dloss/dlogits."""
    grad_w2 = dlogits.T @ cache.hidden
    grad_b2 = dlogits.sum(axis=0)
    dhidden = (dlogits @ model.w2) * (1.0 - cache.hidden**2)
    grad_w1 = dhidden.T @ cache.x
    grad_b1 = dhidden.sum(axis=0)
    return {"w1": grad_w1, "b1": grad_b1, "w2": grad_w2, "b2": grad_b2}


def greedy_action(model: PolicyModel, features: BlockFeatures | np.ndarray) -> PolicyAction:
    """Argmax action; ties go to the lowest index."""
    return PolicyAction(int(np.argmax(forward(model, features))))


class Policy(Protocol):
    name: str
    history: int

    def decide(self, features: BlockFeatures) -> PolicyAction: ...


class ModelPolicy:
    """Greedy decisions from a trained scorer."""

    def __init__(self, model: PolicyModel, name: str = "model") -> None:
        self.model = model
        self.name = name
        self.history = model.history

    def decide(self, features: BlockFeatures) -> PolicyAction:
        return greedy_action(self.model, features)


def _file_payload(model: PolicyModel) -> PolicyModelFile:
    return PolicyModelFile(
        version=model.version,
        strategy=model.strategy,
        input_dim=model.input_dim,
        hidden=model.hidden,
        history=model.history,
        use_echo=model.use_echo,
        weights={name: value.tolist() for name, value in model.params().items()},
    )


def model_content_hash(document: PolicyModelFile) -> str:
    data = document.model_dump(mode="json", exclude={"content_hash"})
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def save_model(model: PolicyModel, path: Path | str) -> Path:
    document = _file_payload(model)
    document.content_hash = model_content_hash(document)
    target = write_model(document, path)
    logger.info("Saved %s policy model (%d hidden) to %s", model.strategy.value, model.hidden, target)
    return target


def load_model(path: Path | str) -> PolicyModel:
    """Read a model file and verify its shapes and content hash.

    Raises:
        ArtifactError: Unreadable file, schema failure or hash mismatch.
    """
    document = read_model(PolicyModelFile, path, "policy_model")
    if model_content_hash(document) != document.content_hash:
        logger.error("Content hash mismatch for %s", path)
        raise ArtifactError(path, "content hash mismatch")
    try:
        weights = {name: np.asarray(document.weights[name], dtype=float) for name in PARAM_NAMES}
    except KeyError as exc:
        raise ArtifactError(path, f"missing weight array {exc}") from exc
    expected = {
        "w1": (document.hidden, document.input_dim),
        "b1": (document.hidden,),
        "w2": (N_ACTIONS, document.hidden),
        "b2": (N_ACTIONS,),
    }
    for name, shape in expected.items():
        if weights[name].shape != shape:
            raise ArtifactError(path, f"{name} has shape {weights[name].shape}, expected {shape}")
    if document.input_dim != input_dim(document.history):
        raise ArtifactError(path, f"input_dim {document.input_dim} does not match history {document.history}")
    return PolicyModel(
        **weights,
        strategy=document.strategy,
        history=document.history,
        use_echo=document.use_echo,
        version=document.version,
    )
