"""Tests for block features, the scorer, the oracle and model files."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from duplex_engine.encoder.frontend import ACTIVITY, ECHO, FEATURE_DIM, RELEVANCE, USER, FeatureVector
from duplex_engine.errors import ArtifactError, LabelError
from duplex_engine.policy.features import (
    BASE_DIM,
    ECHO_INDEX,
    BlockFeatures,
    FeatureHistory,
    base_features,
    input_dim,
    mask_echo,
    stack_history,
)
from duplex_engine.policy.model import (
    ModelPolicy,
    PolicyAction,
    PolicyModel,
    forward,
    greedy_action,
    load_model,
    save_model,
)
from duplex_engine.policy.oracle import GroundTruthPlan, OraclePolicy, oracle_policy
from duplex_engine.schemas.scenario import Direction
from duplex_engine.timebase import StrategyKind


def _embedding(**slots: float) -> FeatureVector:
    values = np.zeros(2 * FEATURE_DIM)
    for name, value in slots.items():
        index = {"activity": ACTIVITY, "user": USER, "relevance": RELEVANCE, "echo": ECHO}[name]
        values[index] = value
        values[FEATURE_DIM + index] = value
    return FeatureVector(values=values)


def _features(block_index: int = 0, speaking: bool = False, history: int = 0, seed: int = 0) -> BlockFeatures:
    rng = np.random.default_rng(seed)
    return BlockFeatures(
        block_index=block_index,
        base=rng.random(BASE_DIM),
        history=rng.random(BASE_DIM * history),
        speaking=speaking,
    )


def test_base_features_of_silence() -> None:
    values = base_features([], playing=False, text_done=False, blocks_since_transition=0, speaking=False)
    assert values.shape == (BASE_DIM,)
    assert values[2] == 1.0
    assert values.sum() == 1.0


def test_base_features_of_user_speech() -> None:
    env = [_embedding(activity=1.0, user=1.0, relevance=0.9)] * 2
    values = base_features(env, playing=True, text_done=True, blocks_since_transition=50, speaking=True)
    assert values[0] == pytest.approx(1.0)
    assert values[2] == 0.0
    assert values[3] == pytest.approx(1.0)
    assert values[5] == pytest.approx(0.9)
    assert list(values[7:]) == [1.0, 1.0, 1.0, 1.0]


def test_echo_shows_up_in_echo_feature() -> None:
    values = base_features([_embedding(echo=0.5)], playing=True, text_done=False, blocks_since_transition=1, speaking=True)
    assert values[ECHO_INDEX] == pytest.approx(0.5)


def test_history_is_newest_first_and_zero_padded() -> None:
    tracker = FeatureHistory(3)
    assert not tracker.snapshot().any()
    tracker.push(np.full(BASE_DIM, 1.0))
    tracker.push(np.full(BASE_DIM, 2.0))
    snap = tracker.snapshot()
    assert snap.shape == (3 * BASE_DIM,)
    assert set(snap[:BASE_DIM]) == {2.0}
    assert set(snap[BASE_DIM : 2 * BASE_DIM]) == {1.0}
    assert not snap[2 * BASE_DIM :].any()


def test_history_window_drops_oldest() -> None:
    tracker = FeatureHistory(2)
    for value in (1.0, 2.0, 3.0):
        tracker.push(np.full(BASE_DIM, value))
    snap = tracker.snapshot()
    assert snap[0] == 3.0
    assert snap[BASE_DIM] == 2.0


def test_stack_history_matches_streaming() -> None:
    rng = np.random.default_rng(4)
    bases = [rng.random(BASE_DIM) for _ in range(6)]
    matrix = stack_history(bases, 2)
    assert matrix.shape == (6, input_dim(2))
    np.testing.assert_array_equal(matrix[3, BASE_DIM : 2 * BASE_DIM], bases[2])
    np.testing.assert_array_equal(matrix[3, 2 * BASE_DIM :], bases[1])
    assert stack_history([], 2).shape == (0, input_dim(2))


def test_mask_echo_clears_every_group() -> None:
    matrix = np.ones((2, input_dim(2)))
    masked = mask_echo(matrix)
    for group in range(3):
        assert (masked[:, group * BASE_DIM + ECHO_INDEX] == 0.0).all()
    assert masked.sum() == matrix.sum() - 2 * 3
    assert matrix.all()


def test_forward_is_a_distribution() -> None:
    model = PolicyModel.initialize(history=2, seed=3, scale=0.5)
    probs = forward(model, _features(history=2))
    assert probs.shape == (3,)
    assert probs.sum() == pytest.approx(1.0)
    assert (probs > 0).all()


def test_zero_model_is_uniform_and_stays() -> None:
    model = PolicyModel.zeros(history=1)
    features = _features(history=1)
    np.testing.assert_allclose(forward(model, features), np.full(3, 1.0 / 3.0))
    assert greedy_action(model, features) is PolicyAction.STAY


def test_forward_rejects_wrong_dimension() -> None:
    model = PolicyModel.initialize(history=2)
    with pytest.raises(ValueError):
        forward(model, _features(history=1))


def test_forward_rejects_non_finite_parameters() -> None:
    model = PolicyModel.initialize(history=0)
    model.w2[0, 0] = np.nan
    with pytest.raises(ValueError):
        forward(model, _features())


def test_echo_blind_model_ignores_echo() -> None:
    model = PolicyModel.initialize(history=1, seed=5, scale=1.0, use_echo=False)
    features = _features(history=1, seed=2)
    louder = BlockFeatures(
        block_index=0,
        base=features.base.copy(),
        history=features.history.copy(),
        speaking=False,
    )
    louder.base[ECHO_INDEX] = 0.99
    louder.history[ECHO_INDEX] = 0.99
    np.testing.assert_array_equal(forward(model, features), forward(model, louder))


def test_model_policy_decides_greedily() -> None:
    model = PolicyModel.zeros(history=0)
    model.b2[:] = [0.0, 0.0, 3.0]
    policy = ModelPolicy(model)
    assert policy.history == 0
    assert policy.decide(_features()) is PolicyAction.TEXT


def test_copy_is_independent() -> None:
    model = PolicyModel.initialize(history=0, seed=1)
    clone = model.copy()
    clone.w1[0, 0] += 1.0
    assert model.w1[0, 0] != clone.w1[0, 0]


def test_plan_actions() -> None:
    plan = GroundTruthPlan(transitions={4: Direction.TO_SPEAKING, 9: Direction.TO_LISTENING}, response_symbols={5: 12, 6: 13})
    assert plan.action_at(4, speaking=False) is PolicyAction.SWITCH
    assert plan.action_at(5, speaking=True) is PolicyAction.TEXT
    assert plan.action_at(5, speaking=False) is PolicyAction.STAY
    assert plan.action_at(7, speaking=True) is PolicyAction.STAY


def test_plan_label_events_merge_consecutive_blocks() -> None:
    plan = GroundTruthPlan(
        transitions={3: Direction.TO_SPEAKING, 8: Direction.TO_LISTENING},
        response_symbols={4: 20, 5: 21, 7: 22},
        utterance_symbols={0: 5, 1: 6, 2: 7},
    )
    events = plan.label_events()
    assert [(s.first_block, s.symbols) for s in events.responses] == [(4, (20, 21)), (7, (22,))]
    assert [(s.first_block, s.symbols) for s in events.utterances] == [(0, (5, 6, 7))]
    assert [m.block_index for m in events.transitions] == [3, 8]


def test_oracle_follows_plan() -> None:
    policy = OraclePolicy(GroundTruthPlan(transitions={2: Direction.TO_SPEAKING}), history=0)
    assert policy.decide(_features(block_index=2)) is PolicyAction.SWITCH
    policy.replan(GroundTruthPlan())
    assert policy.decide(_features(block_index=2)) is PolicyAction.STAY


def test_oracle_without_plan_fails() -> None:
    with pytest.raises(LabelError):
        oracle_policy(_features(), None)


def test_model_file_round_trip(tmp_path: Path) -> None:
    model = PolicyModel.initialize(hidden=5, history=2, strategy=StrategyKind.EXPLICIT_NS, seed=9, use_echo=False)
    model.version = "sft-10"
    path = save_model(model, tmp_path / "model.json")
    loaded = load_model(path)
    for name, value in model.params().items():
        np.testing.assert_array_equal(loaded.params()[name], value)
    assert loaded.strategy is StrategyKind.EXPLICIT_NS
    assert (loaded.history, loaded.use_echo, loaded.version) == (2, False, "sft-10")


def test_tampered_model_fails_hash_check(tmp_path: Path) -> None:
    path = save_model(PolicyModel.initialize(hidden=3, history=0), tmp_path / "model.json")
    document = json.loads(path.read_text())
    document["weights"]["b2"][0] = 5.0
    path.write_text(json.dumps(document))
    with pytest.raises(ArtifactError):
        load_model(path)


def test_newer_schema_is_rejected(tmp_path: Path) -> None:
    path = save_model(PolicyModel.initialize(hidden=3, history=0), tmp_path / "model.json")
    document = json.loads(path.read_text())
    document["schema_version"] = "2.0"
    path.write_text(json.dumps(document))
    with pytest.raises(ArtifactError):
        load_model(path)


def test_unreadable_model_file(tmp_path: Path) -> None:
    with pytest.raises(ArtifactError):
        load_model(tmp_path / "missing.json")
    garbage = tmp_path / "garbage.json"
    garbage.write_text("{not json")
    with pytest.raises(ArtifactError):
        load_model(garbage)
