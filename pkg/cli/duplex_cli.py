from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Callable

PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from duplex_engine import __version__
from duplex_engine.config import DEFAULT_WORKERS
from duplex_engine.errors import (
    EXIT_ARTIFACT,
    EXIT_CONFIG,
    EXIT_DIVERGENCE,
    EXIT_METRIC,
    EXIT_OK,
    EXIT_PROTOCOL,
    ArtifactError,
    ConfigError,
    MetricUndefinedError,
    ProtocolViolationError,
    TrainingDivergenceError,
)
from duplex_engine.logging_config import configure_logging
from duplex_engine.metrics.duplex import latency_report
from duplex_engine.metrics.report import format_report, format_table, latency_rows, training_log_table
from duplex_engine.policy.model import ModelPolicy, Policy, load_model
from duplex_engine.policy.oracle import OraclePolicy
from duplex_engine.schemas.artifact import check_schema_version, read_jsonl, read_model, write_model
from duplex_engine.schemas.config import EngineConfig, load_config
from duplex_engine.schemas.model import PolicyModelFile, TrainingLog
from duplex_engine.schemas.report import EvalReport, LatencyReport
from duplex_engine.schemas.scenario import Scenario, SuiteKind, SuiteManifest
from duplex_engine.services.eval_service import check_model_strategy, evaluate
from duplex_engine.services.suite_service import generate_to_dir
from duplex_engine.services.training_service import train_preference, train_sft
from duplex_engine.sim.scenarios import plan_ground_truth
from duplex_engine.sim.storage import MANIFEST_NAME, read_transcript, read_transcripts

from cli.console import console_scenario, run_console


def _positive_int(raw: str) -> int:
    """Argparse type for counts that must be at least one.

    Args:
        raw: Command-line text.

    Returns:
        The parsed integer.
    """
    try:
        value = int(raw)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"{raw!r} is not an integer") from exc
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {value}")
    return value


def _echo_list(raw: str) -> list[float]:
    try:
        values = [float(part) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"{raw!r} is not a comma-separated list of numbers") from exc
    if not values or any(value < 0 for value in values):
        raise argparse.ArgumentTypeError("echo factors must be non-negative")
    return values


def _block_range(raw: str) -> tuple[int, int | None]:
    start, sep, stop = raw.partition(":")
    try:
        return int(start or 0), (int(stop) if sep and stop else None)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"{raw!r} is not of the form A:B") from exc


def _load_cfg(args: argparse.Namespace) -> EngineConfig:
    return load_config(args.config, args.overrides)


def cmd_generate(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    echo = cfg.echo.factor if args.echo is None else args.echo
    result = generate_to_dir(args.kind, args.count, args.seed, args.out, timing=cfg.timing, echo_factor=echo)
    print(f"wrote {result.manifest.count} scenarios to {result.manifest_path.parent}")
    rows = [{"label": label, "count": count} for label, count in result.manifest.label_counts.items()]
    print(format_table(rows), end="")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    if args.mode == "sft":
        result = train_sft(args.data, cfg, args.out, log_path=args.log, workers=args.workers)
    else:
        result = train_preference(
            args.data, cfg, args.init, args.out, monitor_dir=args.monitor, log_path=args.log, workers=args.workers
        )
    print(training_log_table(result.log.rows), end="")
    print(f"model: {result.model_path}\nlog: {result.log_path}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    result = evaluate(
        args.suite,
        cfg,
        args.out,
        model_path=args.model,
        echo_factors=args.echo,
        workers=args.workers,
        strict=args.strict,
    )
    print(result.text, end="")
    print(f"report: {result.report_path}")
    return EXIT_OK


def cmd_latency_report(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    transcripts = read_transcripts(args.transcripts)
    summary = latency_report(transcripts, cfg.tolerances)
    report = LatencyReport(engine_version=__version__, transcripts=len(transcripts), latency=summary)
    print(format_table(latency_rows(summary)), end="")
    if args.out is not None:
        write_model(report, args.out)
        print(f"report: {args.out}")
    return EXIT_OK


def cmd_console(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    if args.model is not None:
        model = load_model(args.model)
        check_model_strategy(model, cfg, args.model)
        policy: Policy = ModelPolicy(model)
    else:
        empty = console_scenario("console", echo_factor=cfg.echo.factor, response_tokens=args.response_tokens)
        policy = OraclePolicy(plan_ground_truth(empty, cfg.timing), history=cfg.training.history)
    run_console(
        policy,
        cfg,
        realtime=not args.no_realtime,
        save=args.save,
        scenario_out=args.scenario_out,
        response_tokens=args.response_tokens,
    )
    return EXIT_OK


def _inspect_transcript(path: Path, blocks: tuple[int, int | None]) -> None:
    transcript = read_transcript(path)
    header = transcript.header
    print(
        f"transcript {header.scenario_id}: {header.n_blocks} blocks of {header.block_ms} ms, "
        f"strategy {header.strategy.value}, policy {header.policy}, echo {header.echo_factor:g}"
    )
    print(f"turn ends: {header.turn_ends_ms}  judged events: {len(header.judged_events)}  violations: {transcript.violations}")
    start, stop = blocks
    rows = [
        {
            "block": record.block_index,
            "state": record.state.value,
            "action": record.action,
            "token": record.token,
            "next": record.state_after.value,
            "buffer_ms": record.buffered_ms,
            "playback": ",".join(f"{event.kind}@{event.ms}" for event in record.playback) or None,
        }
        for record in transcript.records[start:stop]
    ]
    print(format_table(rows), end="")


def _inspect_document(path: Path) -> None:
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactError(path, f"cannot read: {exc}") from exc
    check_schema_version(raw, path)
    artifact = raw.get("artifact")
    if artifact == "scenario":
        scenario = read_model(Scenario, path, "scenario")
        print(f"scenario {scenario.id}: {scenario.kind.value} / {scenario.setting.value}, echo {scenario.echo_factor:g}")
        print(format_table([event.model_dump(mode="json") for event in scenario.events]), end="")
    elif artifact == "suite_manifest":
        manifest = read_model(SuiteManifest, path, "suite_manifest")
        print(f"suite {manifest.kind.value}: {manifest.count} scenarios, seed {manifest.seed}, echo {manifest.echo_factor:g}")
        print(format_table([{"label": k, "count": v} for k, v in manifest.label_counts.items()]), end="")
    elif artifact == "policy_model":
        document = read_model(PolicyModelFile, path, "policy_model")
        print(
            f"policy model {document.version}: strategy {document.strategy.value}, input {document.input_dim}, "
            f"hidden {document.hidden}, history {document.history}, use_echo {document.use_echo}"
        )
    elif artifact == "training_log":
        log = read_model(TrainingLog, path, "training_log")
        print(f"{log.mode} training log ({len(log.rows)} rows)")
        print(training_log_table(log.rows), end="")
    elif artifact == "report":
        print(format_report(read_model(EvalReport, path, "report")), end="")
    elif artifact == "latency_report":
        report = read_model(LatencyReport, path, "latency_report")
        print(format_table(latency_rows(report.latency)), end="")
    else:
        print(json.dumps(raw, sort_keys=True, indent=2))


def cmd_inspect(args: argparse.Namespace) -> int:
    path = Path(args.path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if path.suffix == ".jsonl":
        header, rows = read_jsonl(path)
        if header.get("artifact") == "transcript":
            _inspect_transcript(path, args.blocks)
        else:
            print(f"{header.get('artifact')}: {len(rows)} rows")
        return EXIT_OK
    _inspect_document(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    """Argument parser for every subcommand.

    Returns:
        The configured parser.
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="engine config JSON (default: $DUPLEX_CONFIG)")
    common.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="dotted config override"
    )

    parser = argparse.ArgumentParser(prog="duplex", description="Full-duplex dialogue engine at symbolic scale.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    generate = sub.add_parser("generate", parents=[common], help="write a scenario suite")
    generate.add_argument("kind", choices=[kind.value for kind in SuiteKind])
    generate.add_argument("count", type=_positive_int)
    generate.add_argument("--seed", type=int, required=True)
    generate.add_argument("--out", type=Path, required=True)
    generate.add_argument("--echo", type=float, default=None)
    generate.set_defaults(handler=cmd_generate)

    train = sub.add_parser("train", parents=[common], help="supervised or preference training")
    train.add_argument("mode", choices=["sft", "dpo"])
    train.add_argument("--data", type=Path, required=True)
    train.add_argument("--out", type=Path, required=True)
    train.add_argument("--init", type=Path, default=None, help="starting model (dpo)")
    train.add_argument("--monitor", type=Path, default=None, help="monitor suite (dpo, default: --data)")
    train.add_argument("--log", type=Path, default=None)
    train.add_argument("--workers", type=_positive_int, default=DEFAULT_WORKERS)
    train.set_defaults(handler=cmd_train)

    evaluate_cmd = sub.add_parser("eval", parents=[common], help="run a suite and write a report")
    evaluate_cmd.add_argument("--suite", type=Path, required=True)
    who = evaluate_cmd.add_mutually_exclusive_group(required=True)
    who.add_argument("--model", type=Path)
    who.add_argument("--oracle", action="store_true")
    evaluate_cmd.add_argument("--out", type=Path, required=True)
    evaluate_cmd.add_argument("--echo", type=_echo_list, default=None, help="comma-separated echo factors")
    evaluate_cmd.add_argument("--workers", type=_positive_int, default=DEFAULT_WORKERS)
    evaluate_cmd.add_argument("--strict", action="store_true", help="fail on text emitted while listening")
    evaluate_cmd.set_defaults(handler=cmd_eval)

    latency = sub.add_parser("latency-report", parents=[common], help="latency statistics of saved transcripts")
    latency.add_argument("--transcripts", type=Path, required=True)
    latency.add_argument("--out", type=Path, default=None)
    latency.set_defaults(handler=cmd_latency_report)

    console = sub.add_parser("console", parents=[common], help="interactive block-stepped session")
    who = console.add_mutually_exclusive_group(required=True)
    who.add_argument("--model", type=Path)
    who.add_argument("--oracle", action="store_true")
    console.add_argument("--no-realtime", action="store_true")
    console.add_argument("--save", type=Path, default=None)
    console.add_argument("--scenario-out", type=Path, default=None)
    console.add_argument("--response-tokens", type=_positive_int, default=24)
    console.set_defaults(handler=cmd_console)

    inspect = sub.add_parser("inspect", parents=[common], help="summarise any artifact")
    inspect.add_argument("path")
    inspect.add_argument("--blocks", type=_block_range, default=(0, None), metavar="A:B")
    inspect.set_defaults(handler=cmd_inspect)
    return parser


_EXIT_CODES: tuple[tuple[type[Exception], int], ...] = (
    (ConfigError, EXIT_CONFIG),
    (ArtifactError, EXIT_ARTIFACT),
    (ProtocolViolationError, EXIT_PROTOCOL),
    (TrainingDivergenceError, EXIT_DIVERGENCE),
    (MetricUndefinedError, EXIT_METRIC),
)


def main(argv: list[str] | None = None) -> int:
    """Entry point for the duplex CLI.

    Returns:
        The process exit code.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "train" and args.mode == "dpo" and args.init is None:
        parser.error("train dpo requires --init")
    configure_logging()
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except tuple(error for error, _ in _EXIT_CODES) as exc:
        print(f"error: {exc}", file=sys.stderr)
        for error, code in _EXIT_CODES:
            if isinstance(exc, error):
                return code
        raise


if __name__ == "__main__":
    raise SystemExit(main())
