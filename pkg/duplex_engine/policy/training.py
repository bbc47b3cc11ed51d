"""Supervised and preference training for the block scorer.

Losses return ``(value, gradients)`` with analytic gradients from ``backward``;
``gradcheck`` compares them to central differences.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from duplex_engine.errors import TrainingDivergenceError
from duplex_engine.policy.features import BASE_FEATURES, input_dim, stack_history
from duplex_engine.policy.model import (
    N_ACTIONS,
    ForwardCache,
    PARAM_NAMES,
    PolicyAction,
    PolicyModel,
    PreferencePair,
    backward,
    forward_batch,
)
from duplex_engine.schemas.scenario import EventLabel
from duplex_engine.schemas.transcript import Transcript
from duplex_engine.timebase import State, StrategyKind

logger = logging.getLogger(__name__)

LossFn = Callable[[PolicyModel], tuple[float, dict[str, np.ndarray]]]

TEXT_DONE_INDEX = BASE_FEATURES.index("text_done")
GRADCHECK_STEP = 1e-5
GRADCHECK_FLOOR = 1e-5


@dataclass(slots=True)
class SupervisedSet:
    """Policy inputs with gold actions and per-example loss weights."""

    X: np.ndarray
    y: np.ndarray
    w: np.ndarray

    def __post_init__(self) -> None:
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        self.w = np.asarray(self.w, dtype=float)
        if self.X.ndim != 2:
            raise ValueError("X must be a 2-D array")
        if not len(self.X) == len(self.y) == len(self.w):
            raise ValueError("X, y and w must have the same length")

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, index: np.ndarray) -> "SupervisedSet":
        return SupervisedSet(self.X[index], self.y[index], self.w[index])

    @classmethod
    def empty(cls, dim: int) -> "SupervisedSet":
        return cls(np.zeros((0, dim)), np.zeros(0, dtype=int), np.zeros(0))


@dataclass(slots=True)
class PreferenceSet:
    X: np.ndarray
    chosen: np.ndarray
    rejected: np.ndarray

    def __post_init__(self) -> None:
        self.X = np.asarray(self.X, dtype=float)
        self.chosen = np.asarray(self.chosen, dtype=int)
        self.rejected = np.asarray(self.rejected, dtype=int)
        if self.X.ndim != 2 or not len(self.X) == len(self.chosen) == len(self.rejected):
            raise ValueError("X must be 2-D with one row per pair")
        if np.any(self.chosen == self.rejected):
            raise ValueError("a preference pair needs two different actions")

    def __len__(self) -> int:
        return len(self.chosen)

    def subset(self, index: np.ndarray) -> "PreferenceSet":
        return PreferenceSet(self.X[index], self.chosen[index], self.rejected[index])

    @classmethod
    def from_pairs(cls, pairs: Sequence[PreferencePair], dim: int) -> "PreferenceSet":
        if not pairs:
            return cls(np.zeros((0, dim)), np.zeros(0, dtype=int), np.zeros(0, dtype=int))
        return cls(
            np.vstack([pair.context.vector for pair in pairs]),
            np.array([int(pair.chosen) for pair in pairs]),
            np.array([int(pair.rejected) for pair in pairs]),
        )


def _one_hot(actions: np.ndarray) -> np.ndarray:
    out = np.zeros((len(actions), N_ACTIONS), dtype=float)
    out[np.arange(len(actions)), actions] = 1.0
    return out


def _zero_grads(model: PolicyModel) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(value) for name, value in model.params().items()}


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def cross_entropy_loss(model: PolicyModel, data: SupervisedSet) -> tuple[float, dict[str, np.ndarray]]:
    """Weighted mean cross-entropy ``sum(w * -log p(y)) / N`` and its gradients.

    Negative weights push probability away from the labelled action.
    """
    if len(data) == 0:
        return 0.0, _zero_grads(model)
    cache = forward_batch(model, data.X)
    n = len(data)
    picked = cache.log_probs[np.arange(n), data.y]
    loss = float(np.sum(data.w * -picked) / n)
    probs = np.exp(cache.log_probs)
    dlogits = data.w[:, None] * (probs - _one_hot(data.y)) / n
    return loss, backward(model, cache, dlogits)


def dpo_margins(
    model: PolicyModel, reference: PolicyModel, pairs: PreferenceSet, beta: float
) -> tuple[np.ndarray, ForwardCache]:
    cache = forward_batch(model, pairs.X)
    ref = forward_batch(reference, pairs.X)
    rows = np.arange(len(pairs))
    policy_ratio = cache.log_probs[rows, pairs.chosen] - cache.log_probs[rows, pairs.rejected]
    reference_ratio = ref.log_probs[rows, pairs.chosen] - ref.log_probs[rows, pairs.rejected]
    return beta * (policy_ratio - reference_ratio), cache


def dpo_loss(
    model: PolicyModel,
    reference: PolicyModel,
    pairs: PreferenceSet,
    beta: float,
    *,
    retained: SupervisedSet | None = None,
    lam: float = 0.0,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean DPO loss over ``pairs`` plus ``lam`` times the retained cross-entropy.

    The per-pair term is ``-log sigmoid(m)`` with
    ``m = beta * ((log p(c) - log ref(c)) - (log p(r) - log ref(r)))``.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    loss = 0.0
    grads = _zero_grads(model)
    if len(pairs):
        margins, cache = dpo_margins(model, reference, pairs, beta)
        n = len(pairs)
        loss = float(np.mean(-_log_sigmoid(margins)))
        # d(-log sigmoid(m))/dm = -sigmoid(-m); dm/dlogits = beta * (e_c - e_r)
        scale = -np.exp(_log_sigmoid(-margins)) * beta / n
        dlogits = scale[:, None] * (_one_hot(pairs.chosen) - _one_hot(pairs.rejected))
        grads = backward(model, cache, dlogits)
    if retained is not None and lam > 0 and len(retained):
        ce, ce_grads = cross_entropy_loss(model, retained)
        loss += lam * ce
        grads = {name: grads[name] + lam * ce_grads[name] for name in PARAM_NAMES}
    return loss, grads


def gradcheck(model: PolicyModel, loss_fn: LossFn, step: float = GRADCHECK_STEP) -> float:
    """Largest relative error between analytic and central-difference gradients."""
    _, analytic = loss_fn(model)
    params = {name: value.copy() for name, value in model.params().items()}
    worst = 0.0
    for name in PARAM_NAMES:
        flat = params[name].reshape(-1)
        grad = analytic[name].reshape(-1)
        for idx in range(flat.size):
            original = flat[idx]
            flat[idx] = original + step
            plus, _ = loss_fn(model.with_params(params))
            flat[idx] = original - step
            minus, _ = loss_fn(model.with_params(params))
            flat[idx] = original
            numeric = (plus - minus) / (2.0 * step)
            denom = max(abs(grad[idx]), abs(numeric), GRADCHECK_FLOOR)
            worst = max(worst, abs(grad[idx] - numeric) / denom)
    return worst


class SGD:
    def __init__(self, lr: float) -> None:
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.lr = lr

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        return {name: params[name] - self.lr * grads[name] for name in PARAM_NAMES}


class Adam:
    """Adam with bias correction; a zero gradient from a fresh state moves nothing."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        self.t += 1
        updated = {}
        for name in PARAM_NAMES:
            m = self._m.get(name, np.zeros_like(params[name]))
            v = self._v.get(name, np.zeros_like(params[name]))
            m = self.beta1 * m + (1.0 - self.beta1) * grads[name]
            v = self.beta2 * v + (1.0 - self.beta2) * grads[name] ** 2
            self._m[name], self._v[name] = m, v
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            updated[name] = params[name] - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return updated


def make_optimizer(name: str, lr: float) -> SGD | Adam:
    if name == "sgd":
        return SGD(lr)
    if name == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer {name!r}")


def _apply(model: PolicyModel, optimizer: SGD | Adam, grads: dict[str, np.ndarray]) -> PolicyModel:
    return model.with_params(optimizer.step(model.params(), grads))


def _check_step(step: int, loss: float, model: PolicyModel, last_good: PolicyModel, **components: float) -> None:
    finite = math.isfinite(loss) and all(np.all(np.isfinite(v)) for v in model.params().values())
    if finite:
        return
    diagnostics = {"step": step, "loss": loss, **components}
    logger.error("Training diverged at step %d (loss=%s)", step, loss)
    raise TrainingDivergenceError(
        f"non-finite loss at step {step}", last_good=last_good, diagnostics=diagnostics
    )


def accuracy(model: PolicyModel, data: SupervisedSet) -> float:
    """Share of positively weighted examples whose argmax matches the label."""
    mask = data.w > 0
    if not np.any(mask):
        return 0.0
    cache = forward_batch(model, data.X[mask])
    return float(np.mean(np.argmax(cache.logits, axis=1) == data.y[mask]))


def train_supervised(
    model: PolicyModel,
    data: SupervisedSet,
    *,
    lr: float = 0.01,
    steps: int = 1500,
    batch: int = 128,
    optimizer: str = "adam",
    seed: int = 0,
    on_step: Callable[[int, PolicyModel, float], None] | None = None,
) -> PolicyModel:
    """Minimise the weighted cross-entropy with seeded minibatches.

    When ``batch`` covers the whole set every step uses all of it in order.

    Raises:
        ValueError: Empty dataset or non-positive learning rate.
        TrainingDivergenceError: The loss or the parameters became non-finite.
    """
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    if data.X.shape[1] != model.input_dim:
        raise ValueError(f"dataset has {data.X.shape[1]} features, model expects {model.input_dim}")
    opt = make_optimizer(optimizer, lr)
    rng = np.random.default_rng(seed)
    full = batch >= len(data)
    logger.info("Supervised training: %d examples, %d steps, batch %d, %s lr=%g", len(data), steps, batch, optimizer, lr)
    for step in range(1, steps + 1):
        chunk = data if full else data.subset(rng.choice(len(data), size=batch, replace=False))
        loss, grads = cross_entropy_loss(model, chunk)
        last_good = model
        _check_step(step, loss, model, last_good)
        model = _apply(model, opt, grads)
        _check_step(step, loss, model, last_good)
        if on_step is not None:
            on_step(step, model, loss)
    return model


def dpo_step(
    model: PolicyModel,
    reference: PolicyModel,
    pairs: PreferenceSet | Sequence[PreferencePair],
    beta: float,
    lr: float,
    *,
    retained: SupervisedSet | None = None,
    lam: float = 0.0,
    optimizer: SGD | Adam | None = None,
    step: int = 0,
) -> tuple[PolicyModel, float]:
    """One gradient step on the DPO objective; ``reference`` is never modified.

    Raises:
        TrainingDivergenceError: The loss or the updated parameters are non-finite.
    """
    if not isinstance(pairs, PreferenceSet):
        pairs = PreferenceSet.from_pairs(list(pairs), model.input_dim)
    opt = optimizer or SGD(lr)
    loss, grads = dpo_loss(model, reference, pairs, beta, retained=retained, lam=lam)
    _check_step(step, loss, model, model, pairs=float(len(pairs)))
    updated = _apply(model, opt, grads)
    _check_step(step, loss, updated, model, pairs=float(len(pairs)))
    return updated, loss


def train_dpo(
    model: PolicyModel,
    pairs: PreferenceSet,
    retained: SupervisedSet,
    *,
    beta: float = 0.1,
    lam: float = 0.5,
    lr: float = 1e-6,
    steps: int = 40,
    batch: int = 256,
    optimizer: str = "adam",
    seed: int = 0,
    on_step: Callable[[int, PolicyModel, float], None] | None = None,
) -> PolicyModel:
    """DPO against a frozen copy of the starting model.

    Each step samples ``batch`` pairs and as many retained examples.
    """
    reference = model.copy()
    opt = make_optimizer(optimizer, lr)
    rng = np.random.default_rng(seed)
    logger.info("DPO: %d pairs, %d retained, %d steps, batch %d, beta=%g lam=%g lr=%g", len(pairs), len(retained), steps, batch, beta, lam, lr)
    for step in range(1, steps + 1):
        pair_batch = pairs if batch >= len(pairs) else pairs.subset(rng.choice(len(pairs), size=batch, replace=False))
        keep = retained if batch >= len(retained) else retained.subset(rng.choice(len(retained), size=batch, replace=False))
        model, loss = dpo_step(model, reference, pair_batch, beta, lr, retained=keep, lam=lam, optimizer=opt, step=step)
        if on_step is not None:
            on_step(step, model, loss)
    return model


# --- datasets from oracle transcripts ---------------------------------------------------


def _inputs(transcript: Transcript, history: int) -> np.ndarray:
    return stack_history([record.features for record in transcript.records], history)


def _record_action(record) -> PolicyAction:
    return PolicyAction[record.action.upper()]


@dataclass(slots=True)
class _Collector:
    X: list[np.ndarray] = field(default_factory=list)
    a: list[int] = field(default_factory=list)
    b: list[float] = field(default_factory=list)


def supervised_set(
    transcripts: Sequence[Transcript],
    *,
    history: int,
    strategy: StrategyKind = StrategyKind.EXPLICIT,
    ns_weight: float = 0.1,
    interrupt_bias: float = 0.0,
    seed: int = 0,
) -> SupervisedSet:
    """Gold actions of oracle runs, one example per block.

    Under the negative-sample strategy plain blocks become SWITCH with weight
    ``-ns_weight``. ``interrupt_bias`` relabels that share of negative barge-in
    onsets (backchannels and false barge-ins heard while speaking) as SWITCH.
    """
    rng = np.random.default_rng(seed)
    out = _Collector()
    for transcript in transcripts:
        X = _inputs(transcript, history)
        block_ms = transcript.header.block_ms
        biased: set[int] = set()
        for event in transcript.header.judged_events:
            if event.positive or event.label not in (EventLabel.FALSE_BARGE_IN, EventLabel.BACKCHANNEL):
                continue
            onset = event.onset_ms // block_ms
            if onset < len(transcript.records) and rng.random() < interrupt_bias:
                biased.add(onset)
        for k, record in enumerate(transcript.records):
            action = _record_action(record)
            weight = 1.0
            if k in biased and record.state is State.SPEAKING and action is not PolicyAction.SWITCH:
                action = PolicyAction.SWITCH
            elif strategy is StrategyKind.EXPLICIT_NS and action is PolicyAction.STAY:
                action, weight = PolicyAction.SWITCH, -ns_weight
            out.X.append(X[k])
            out.a.append(int(action))
            out.b.append(weight)
    if not out.X:
        return SupervisedSet.empty(input_dim(history))
    return SupervisedSet(np.vstack(out.X), np.array(out.a), np.array(out.b))


def preference_data(
    transcripts: Sequence[Transcript],
    *,
    history: int,
    window_ms: int,
) -> tuple[PreferenceSet, SupervisedSet]:
    """Preference pairs around judged events plus the retained supervised blocks.

    A true barge-in gives one pair at its onset block preferring SWITCH over what
    the oracle would otherwise do (TEXT while reply text remains, else STAY). A
    negative event gives one pair per block of the decision window while it is
    audible and the assistant is speaking, preferring the oracle action over
    SWITCH. Every other block is retained with its gold action.
    """
    pairs = _Collector()
    retained = _Collector()
    for transcript in transcripts:
        X = _inputs(transcript, history)
        records = transcript.records
        block_ms = transcript.header.block_ms
        window_blocks = -(-window_ms // block_ms)
        used: set[int] = set()
        for event in transcript.header.judged_events:
            onset = event.onset_ms // block_ms
            if onset >= len(records):
                continue
            if event.positive:
                if records[onset].state is not State.SPEAKING:
                    continue
                text_left = records[onset].features[TEXT_DONE_INDEX] < 0.5
                rejected = PolicyAction.TEXT if text_left else PolicyAction.STAY
                pairs.X.append(X[onset])
                pairs.a.append(int(PolicyAction.SWITCH))
                pairs.b.append(int(rejected))
                used.add(onset)
                continue
            for k in range(onset, min(onset + window_blocks, len(records))):
                if k * block_ms >= event.end_ms or records[k].state is not State.SPEAKING:
                    continue
                action = _record_action(records[k])
                if action is PolicyAction.SWITCH:
                    continue
                pairs.X.append(X[k])
                pairs.a.append(int(action))
                pairs.b.append(int(PolicyAction.SWITCH))
                used.add(k)
        for k, record in enumerate(records):
            if k in used:
                continue
            retained.X.append(X[k])
            retained.a.append(int(_record_action(record)))
            retained.b.append(1.0)
    dim = input_dim(history)
    preference = (
        PreferenceSet(np.vstack(pairs.X), np.array(pairs.a), np.array(pairs.b, dtype=int))
        if pairs.X
        else PreferenceSet(np.zeros((0, dim)), np.zeros(0, dtype=int), np.zeros(0, dtype=int))
    )
    kept = (
        SupervisedSet(np.vstack(retained.X), np.array(retained.a), np.array(retained.b))
        if retained.X
        else SupervisedSet.empty(dim)
    )
    return preference, kept
