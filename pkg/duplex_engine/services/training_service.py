"""Service layer for supervised and preference training runs."""

from __future__ import annotations

import logging
import sys
from dataclasses import dataclass
from pathlib import Path

from tqdm import tqdm

from duplex_engine.errors import ArtifactError, TrainingDivergenceError
from duplex_engine.metrics.report import build_row
from duplex_engine.policy.model import PolicyModel, load_model, save_model
from duplex_engine.policy.training import accuracy, preference_data, supervised_set, train_dpo, train_supervised
from duplex_engine.schemas.artifact import write_model
from duplex_engine.schemas.config import EngineConfig, config_hash
from duplex_engine.schemas.model import TrainingLog, TrainingLogRow
from duplex_engine.schemas.scenario import Scenario
from duplex_engine.services.eval_service import check_model_strategy, run_suite
from duplex_engine.sim.storage import read_suite

logger = logging.getLogger(__name__)

SFT_LOG_EVERY = 100


@dataclass(slots=True)
class TrainResult:
    """Outcome of a training run.

    Attributes:
        model: The trained model.
        model_path: Where the model was written.
        log: Step-indexed metrics.
        log_path: Where the log was written.
    """

    model: PolicyModel
    model_path: Path
    log: TrainingLog
    log_path: Path


def default_log_path(model_path: Path | str) -> Path:
    path = Path(model_path)
    return path.with_name(path.stem + ".log.json")


def _save_last_good(exc: TrainingDivergenceError, out_model: Path | str) -> None:
    if isinstance(exc.last_good, PolicyModel):
        save_model(exc.last_good, out_model)
        logger.error("Kept last good model at %s (diagnostics: %s)", out_model, exc.diagnostics)


def monitor_row(model: PolicyModel, scenarios: list[Scenario], echo_factor: float, cfg: EngineConfig, step: int, loss: float | None, workers: int = 1) -> TrainingLogRow:
    """Evaluate ``model`` on the monitor suite and summarise it as one log row."""
    transcripts = run_suite(scenarios, cfg, model=model, workers=workers, desc=f"monitor step {step}")
    row = build_row(transcripts, echo_factor, cfg.tolerances)
    tp = row.independent.tp + row.dependent.tp
    fp = row.independent.fp + row.dependent.fp
    fn = row.independent.fn + row.dependent.fn
    return TrainingLogRow(
        step=step,
        loss=loss,
        precision=tp / (tp + fp) if tp + fp else None,
        recall=tp / (tp + fn) if tp + fn else None,
        f1=row.pooled_f1,
        independent_f1=row.independent.f1,
        dependent_f1=row.dependent.f1,
        overall_f1=row.overall_f1,
    )


def train_sft(
    data_dir: Path | str,
    cfg: EngineConfig,
    out_model: Path | str,
    *,
    log_path: Path | str | None = None,
    workers: int = 1,
) -> TrainResult:
    """Supervised training on the oracle trajectories of a suite.

    Raises:
        ArtifactError: The suite cannot be read.
        TrainingDivergenceError: Non-finite loss; the last good model is written first.
    """
    _, scenarios = read_suite(data_dir)
    tc = cfg.training
    transcripts = run_suite(scenarios, cfg, workers=workers, desc="oracle runs")
    data = supervised_set(
        transcripts,
        history=tc.history,
        strategy=cfg.strategy,
        ns_weight=tc.ns_weight,
        interrupt_bias=tc.interrupt_bias,
        seed=cfg.seeds.train,
    )
    model = PolicyModel.initialize(
        hidden=tc.hidden,
        history=tc.history,
        strategy=cfg.strategy,
        seed=cfg.seeds.train,
        scale=tc.init_scale,
        use_echo=tc.use_echo,
    )
    rows: list[TrainingLogRow] = []
    bar = tqdm(total=tc.steps, desc="sft", disable=not sys.stderr.isatty())

    def on_step(step: int, current: PolicyModel, loss: float) -> None:
        bar.update(1)
        if step % SFT_LOG_EVERY == 0 or step == tc.steps:
            rows.append(TrainingLogRow(step=step, loss=loss, accuracy=accuracy(current, data)))
            logger.info("SFT step %d loss=%.5f accuracy=%.4f", step, loss, rows[-1].accuracy)

    try:
        model = train_supervised(
            model,
            data,
            lr=tc.lr,
            steps=tc.steps,
            batch=tc.batch,
            optimizer=tc.optimizer,
            seed=cfg.seeds.train,
            on_step=on_step,
        )
    except TrainingDivergenceError as exc:
        _save_last_good(exc, out_model)
        raise
    finally:
        bar.close()
    model.version = f"sft-{tc.steps}"
    model_path = save_model(model, out_model)
    log = TrainingLog(mode="sft", config_hash=config_hash(cfg), rows=rows)
    written = write_model(log, log_path or default_log_path(model_path))
    logger.info("SFT model written to %s", model_path)
    return TrainResult(model=model, model_path=model_path, log=log, log_path=written)


def train_preference(
    data_dir: Path | str,
    cfg: EngineConfig,
    init_model: Path | str,
    out_model: Path | str,
    *,
    monitor_dir: Path | str | None = None,
    log_path: Path | str | None = None,
    workers: int = 1,
) -> TrainResult:
    """DPO from an SFT model, monitored on a suite every ``monitor_every`` steps.

    The monitor suite defaults to the training suite. Step 0 of the log is the
    starting model.

    Raises:
        ArtifactError: Unreadable suite or model.
        ConfigError: The starting model's strategy differs from the config's.
        TrainingDivergenceError: Non-finite loss; the last good model is written first.
    """
    manifest, scenarios = read_suite(data_dir)
    monitor_manifest, monitor = (manifest, scenarios) if monitor_dir is None else read_suite(monitor_dir)
    model = load_model(init_model)
    check_model_strategy(model, cfg, init_model)
    tc = cfg.training
    transcripts = run_suite(scenarios, cfg, workers=workers, desc="oracle runs")
    pairs, retained = preference_data(transcripts, history=model.history, window_ms=cfg.tolerances.interrupt_window_ms)
    logger.info("Built %d preference pairs and %d retained examples", len(pairs), len(retained))
    if len(pairs) == 0:
        logger.error("No preference pairs in %s", data_dir)
        raise ArtifactError(data_dir, "suite has no judged barge-in events to build preference pairs from")

    rows = [monitor_row(model, monitor, monitor_manifest.echo_factor, cfg, 0, None, workers)]

    def on_step(step: int, current: PolicyModel, loss: float) -> None:
        if step % tc.monitor_every == 0:
            row = monitor_row(current, monitor, monitor_manifest.echo_factor, cfg, step, loss, workers)
            rows.append(row)
            logger.info("DPO step %d loss=%.5f overall_f1=%s", step, loss, row.overall_f1)

    try:
        model = train_dpo(
            model,
            pairs,
            retained,
            beta=tc.beta,
            lam=tc.lam,
            lr=tc.dpo_lr,
            steps=tc.dpo_steps,
            batch=tc.dpo_batch,
            optimizer=tc.optimizer,
            seed=cfg.seeds.dpo,
            on_step=on_step,
        )
    except TrainingDivergenceError as exc:
        _save_last_good(exc, out_model)
        raise
    model.version = f"dpo-b{tc.dpo_batch}-{tc.dpo_steps}"
    model_path = save_model(model, out_model)
    log = TrainingLog(mode="dpo", config_hash=config_hash(cfg), rows=rows)
    written = write_model(log, log_path or default_log_path(model_path))
    logger.info("DPO model written to %s", model_path)
    return TrainResult(model=model, model_path=model_path, log=log, log_path=written)
