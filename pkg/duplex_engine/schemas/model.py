"""Policy model files and training logs."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from duplex_engine.schemas.artifact import SCHEMA_VERSION
from duplex_engine.timebase import StrategyKind


class PolicyModelFile(BaseModel):
    """Serialized scorer weights.

    Attributes:
        version: Free-form model version tag.
        strategy: Thinking strategy the model was trained for.
        input_dim: Length of the feature vector the model expects.
        hidden: Width of the hidden layer.
        history: Previous blocks included in the input.
        use_echo: Whether the echo feature is visible to the model.
        weights: Row-major parameter arrays keyed by name (w1, b1, w2, b2).
        content_hash: sha256 over the canonical JSON of every other field.
    """

    model_config = ConfigDict(extra="forbid")

    schema_version: str = SCHEMA_VERSION
    artifact: Literal["policy_model"] = "policy_model"
    version: str = "0"
    strategy: StrategyKind
    input_dim: int = Field(ge=1)
    hidden: int = Field(ge=1)
    history: int = Field(ge=0)
    use_echo: bool = True
    weights: dict[str, list[list[float]] | list[float]]
    content_hash: str = ""


class TrainingLogRow(BaseModel):
    model_config = ConfigDict(extra="forbid")

    step: int = Field(ge=0)
    loss: float | None = None
    accuracy: float | None = None
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    independent_f1: float | None = None
    dependent_f1: float | None = None
    overall_f1: float | None = None
    note: str | None = None


class TrainingLog(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: str = SCHEMA_VERSION
    artifact: Literal["training_log"] = "training_log"
    mode: Literal["sft", "dpo"]
    config_hash: str
    rows: list[TrainingLogRow] = Field(default_factory=list)
