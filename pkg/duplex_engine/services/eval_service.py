"""Service layer for running suites and writing evaluation reports."""

from __future__ import annotations

import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from tqdm import tqdm

from duplex_engine import __version__
from duplex_engine.errors import ArtifactError, ConfigError
from duplex_engine.metrics.duplex import latency_report
from duplex_engine.metrics.report import build_row, format_report
from duplex_engine.policy.model import ModelPolicy, PolicyModel, load_model
from duplex_engine.policy.oracle import OraclePolicy
from duplex_engine.schemas.artifact import write_model
from duplex_engine.schemas.config import EngineConfig, config_hash
from duplex_engine.schemas.report import EvalReport, ReportRow
from duplex_engine.schemas.scenario import Scenario
from duplex_engine.schemas.transcript import Transcript
from duplex_engine.sim.engine import run_conversation
from duplex_engine.sim.scenarios import plan_ground_truth
from duplex_engine.sim.storage import manifest_hash, read_suite, transcript_path, write_transcript

logger = logging.getLogger(__name__)

REPORT_JSON = "report.json"
REPORT_TEXT = "report.txt"


def _progress_disabled() -> bool:
    return not sys.stderr.isatty()


def run_one(scenario: Scenario, cfg: EngineConfig, model: PolicyModel | None, strict: bool = False) -> Transcript:
    """Run one conversation with a model policy, or with the oracle when ``model`` is None."""
    plan = plan_ground_truth(scenario, cfg.timing)
    if model is None:
        policy = OraclePolicy(plan, history=cfg.training.history)
    else:
        policy = ModelPolicy(model)
    return run_conversation(scenario, policy, cfg.strategy, cfg, strict=strict, plan=plan)


def _run_packed(args: tuple[Scenario, EngineConfig, PolicyModel | None, bool]) -> Transcript:
    return run_one(*args)


def run_suite(
    scenarios: Sequence[Scenario],
    cfg: EngineConfig,
    *,
    model: PolicyModel | None = None,
    strict: bool = False,
    workers: int = 1,
    desc: str = "conversations",
) -> list[Transcript]:
    """Run every scenario; transcripts come back in scenario order for any worker count."""
    jobs = [(scenario, cfg, model, strict) for scenario in scenarios]
    bar = tqdm(total=len(jobs), desc=desc, disable=_progress_disabled())
    transcripts: list[Transcript] = []
    try:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for transcript in pool.map(_run_packed, jobs, chunksize=8):
                    transcripts.append(transcript)
                    bar.update(1)
        else:
            for job in jobs:
                transcripts.append(_run_packed(job))
                bar.update(1)
    finally:
        bar.close()
    return transcripts


def with_echo(scenarios: Sequence[Scenario], factor: float) -> list[Scenario]:
    return [scenario.model_copy(update={"echo_factor": factor}) for scenario in scenarios]


def check_model_strategy(model: PolicyModel, cfg: EngineConfig, path: Path | str) -> None:
    if model.strategy is not cfg.strategy:
        logger.error("Strategy mismatch: model %s, config %s", model.strategy.value, cfg.strategy.value)
        raise ConfigError(
            f"{path}: model was trained for the {model.strategy.value} strategy, "
            f"config uses {cfg.strategy.value}"
        )


@dataclass(slots=True)
class EvalResult:
    report: EvalReport
    report_path: Path
    text_path: Path
    text: str


def evaluate(
    suite_dir: Path | str,
    cfg: EngineConfig,
    out_dir: Path | str,
    *,
    model_path: Path | str | None = None,
    echo_factors: Sequence[float] | None = None,
    workers: int = 1,
    strict: bool = False,
) -> EvalResult:
    """Run a suite (once per echo factor), write transcripts and the report.

    Without ``model_path`` the oracle policy is used. Latency statistics are
    taken from the first echo factor's run.

    Raises:
        ArtifactError: Unreadable suite or model file.
        ConfigError: The model's strategy differs from the config's.
        ProtocolViolationError: Strict run and a policy emitted text while listening.
    """
    manifest, scenarios = read_suite(suite_dir)
    model = None
    policy_name = "oracle"
    if model_path is not None:
        model = load_model(model_path)
        check_model_strategy(model, cfg, model_path)
        policy_name = f"model:{Path(model_path).name}"
    factors = list(echo_factors) if echo_factors else [manifest.echo_factor]
    out = Path(out_dir)
    transcripts_dir = out / "transcripts"

    rows: list[ReportRow] = []
    first_run: list[Transcript] = []
    for factor in factors:
        run = run_suite(with_echo(scenarios, factor), cfg, model=model, strict=strict, workers=workers, desc=f"echo {factor:g}")
        tag = factor if len(factors) > 1 else None
        for transcript in run:
            write_transcript(transcript_path(transcripts_dir, transcript.header.scenario_id, tag), transcript)
        rows.append(build_row(run, factor, cfg.tolerances))
        if not first_run:
            first_run = run
        logger.info("Evaluated %d conversations at echo %g", len(run), factor)

    report = EvalReport(
        engine_version=__version__,
        policy=policy_name,
        config=cfg.model_dump(mode="json"),
        config_hash=config_hash(cfg),
        tolerances=cfg.tolerances.model_dump(),
        suite_manifest_hash=manifest_hash(suite_dir),
        rows=rows,
        latency=latency_report(first_run, cfg.tolerances),
    )
    report_path = write_model(report, out / REPORT_JSON)
    text = format_report(report)
    text_path = out / REPORT_TEXT
    try:
        text_path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ArtifactError(text_path, f"cannot write: {exc}") from exc
    logger.info("Report written to %s", report_path)
    return EvalResult(report=report, report_path=report_path, text_path=text_path, text=text)
