"""Engine configuration document: loading, flag overrides and hashing."""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from duplex_engine.config import DEFAULT_CONFIG_PATH
from duplex_engine.errors import ArtifactError, ConfigError
from duplex_engine.schemas.artifact import SCHEMA_VERSION, canonical_json, check_schema_version
from duplex_engine.schemas.timing import TimingConfig
from duplex_engine.timebase import StrategyKind

logger = logging.getLogger(__name__)


class Tolerances(BaseModel):
    """Judgment windows used by the metrics.

    Attributes:
        early_tol_ms: How far before the end of a turn speech may start and still count.
        late_tol_ms: Latest accepted speech onset after the end of a turn (inclusive).
        interrupt_window_ms: Time after a barge-in onset within which stopping counts.
    """

    model_config = ConfigDict(extra="forbid")

    early_tol_ms: int = Field(default=240, ge=0)
    late_tol_ms: int = Field(default=1000, ge=0)
    interrupt_window_ms: int = Field(default=480, gt=0)


class EchoConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    factor: float = Field(default=1.0, ge=0.0)
    delay_blocks: int = Field(default=1, ge=0)


class SeedConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    suite: int = 7
    train: int = 13
    dpo: int = 17


class TrainingConfig(BaseModel):
    """Hyperparameters for supervised and preference training.

    Attributes:
        lr: Supervised learning rate.
        optimizer: "adam" or "sgd".
        steps: Supervised minibatch steps.
        batch: Supervised minibatch size.
        hidden: Hidden width of the scorer.
        history: Number of previous block feature vectors in the input.
        init_scale: Standard deviation of the initial weights.
        use_echo: When false the echo feature is zeroed for this model.
        ns_weight: Magnitude w of the negative loss weight of the negative-sample scheme.
        interrupt_bias: Fraction of negative barge-in onsets relabelled as a switch.
        beta: DPO temperature.
        lam: Weight of the retained supervised term during DPO.
        dpo_lr: DPO learning rate.
        dpo_steps: Number of DPO steps.
        dpo_batch: Preference pairs per DPO step.
        monitor_every: DPO steps between monitor-suite evaluations.
    """

    model_config = ConfigDict(extra="forbid")

    lr: float = Field(default=0.01, gt=0.0)
    optimizer: Literal["adam", "sgd"] = "adam"
    steps: int = Field(default=1500, ge=1)
    batch: int = Field(default=128, ge=1)
    hidden: int = Field(default=16, ge=1)
    history: int = Field(default=8, ge=0)
    init_scale: float = Field(default=0.1, ge=0.0)
    use_echo: bool = True
    ns_weight: float = Field(default=0.1, gt=0.0)
    interrupt_bias: float = Field(default=0.0, ge=0.0, le=1.0)
    beta: float = Field(default=0.1, gt=0.0)
    lam: float = Field(default=0.5, ge=0.0)
    dpo_lr: float = Field(default=1e-6, gt=0.0)
    dpo_steps: int = Field(default=40, ge=1)
    dpo_batch: Literal[128, 256, 512] = 256
    monitor_every: int = Field(default=10, ge=1)


class EngineConfig(BaseModel):
    """Resolved run configuration; every node rejects unknown keys."""

    model_config = ConfigDict(extra="forbid")

    schema_version: str = SCHEMA_VERSION
    artifact: Literal["engine_config"] = "engine_config"
    timing: TimingConfig = Field(default_factory=TimingConfig)
    strategy: StrategyKind = StrategyKind.EXPLICIT
    policy_path: str | None = None
    tolerances: Tolerances = Field(default_factory=Tolerances)
    echo: EchoConfig = Field(default_factory=EchoConfig)
    seeds: SeedConfig = Field(default_factory=SeedConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    grace_ms: int = Field(default=2000, ge=0)

    @model_validator(mode="after")
    def check_embedding_grid(self) -> "EngineConfig":
        if self.timing.block_ms % 40 != 0:
            raise ValueError(
                f"block_ms={self.timing.block_ms} must hold a whole number of 40 ms embeddings"
            )
        return self


def _parse_override_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(data: dict[str, Any], overrides: list[str] | None) -> dict[str, Any]:
    """Apply dotted ``key=value`` assignments to a raw config mapping.

    Values are parsed as JSON when possible (``training.lr=0.01``,
    ``training.use_echo=false``) and used as plain strings otherwise.

    Raises:
        ConfigError: An override is not of the form key=value or descends into a non-object.
    """
    result = json.loads(json.dumps(data))
    for item in overrides or []:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {item!r} is not of the form key=value")
        parts = key.strip().split(".")
        node = result
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"override {item!r}: {part!r} is not a section")
            node = child
        node[parts[-1]] = _parse_override_value(value.strip())
    return result


def build_config(data: dict[str, Any], overrides: list[str] | None = None) -> EngineConfig:
    """Validate a raw mapping (after overrides) into an EngineConfig."""
    merged = apply_overrides(data, overrides)
    try:
        return EngineConfig.model_validate(merged)
    except ValidationError as exc:
        logger.error("Invalid engine config: %s", exc)
        raise ConfigError(f"invalid engine config: {exc}") from exc


def load_config(path: Path | str | None = None, overrides: list[str] | None = None) -> EngineConfig:
    """Load the engine config from ``path``, the DUPLEX_CONFIG file, or defaults.

    Raises:
        ConfigError: The file cannot be read, is not JSON, or fails validation.
    """
    source = Path(path) if path is not None else DEFAULT_CONFIG_PATH
    data: dict[str, Any] = {}
    if source is not None:
        try:
            data = json.loads(source.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"{source}: cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}: invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{source}: expected a JSON object")
        try:
            check_schema_version({"schema_version": SCHEMA_VERSION, **data}, source)
        except ArtifactError as exc:
            raise ConfigError(str(exc)) from exc
        logger.info("Loaded engine config from %s", source)
    return build_config(data, overrides)


def config_hash(cfg: EngineConfig) -> str:
    """sha256 over the canonical JSON of the resolved config."""
    return hashlib.sha256(canonical_json(cfg.model_dump(mode="json")).encode("utf-8")).hexdigest()
