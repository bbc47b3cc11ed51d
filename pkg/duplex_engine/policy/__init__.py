"""Block features, the action scorer, the oracle and their training loops."""

from duplex_engine.policy.features import BlockFeatures, base_features, input_dim  # noqa: F401
from duplex_engine.policy.model import (  # noqa: F401
    ModelPolicy,
    PolicyAction,
    PolicyModel,
    PreferencePair,
    forward,
    load_model,
    save_model,
)
from duplex_engine.policy.oracle import GroundTruthPlan, OraclePolicy, oracle_policy  # noqa: F401
