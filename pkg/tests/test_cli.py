"""Tests for the duplex command line and the stepped console."""

from __future__ import annotations

import json
import os
from pathlib import Path

import pytest

from cli.console import CommandError, console_scenario, parse_command, run_console
from cli.duplex_cli import main
from duplex_engine.errors import EXIT_ARTIFACT, EXIT_CONFIG, EXIT_OK, EXIT_PROTOCOL
from duplex_engine.policy.model import PolicyModel, save_model
from duplex_engine.policy.oracle import OraclePolicy
from duplex_engine.schemas.config import EngineConfig
from duplex_engine.schemas.scenario import EventKind, EventLabel
from duplex_engine.sim.engine import run_conversation
from duplex_engine.sim.scenarios import plan_ground_truth
from duplex_engine.timebase import StrategyKind


@pytest.fixture(autouse=True)
def _no_log_file(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setattr("cli.duplex_cli.configure_logging", lambda: None)


def _suite(tmp_path: Path, kind: str = "turn-taking", count: int = 3, name: str = "suite") -> Path:
    out = tmp_path / name
    assert main(["generate", kind, str(count), "--seed", "5", "--out", str(out)]) == EXIT_OK
    return out


def _text_model(tmp_path: Path, strategy: StrategyKind = StrategyKind.EXPLICIT) -> Path:
    model = PolicyModel.zeros(hidden=2, history=0, strategy=strategy)
    model.b2[:] = [0.0, 0.0, 5.0]
    return save_model(model, tmp_path / "text.json")


def test_generate_rejects_zero_count(tmp_path: Path) -> None:
    with pytest.raises(SystemExit) as info:
        main(["generate", "turn-taking", "0", "--seed", "1", "--out", str(tmp_path / "s")])
    assert info.value.code == 2


def test_generate_is_deterministic(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    first = _suite(tmp_path, "mixed", 6, "a")
    second = _suite(tmp_path, "mixed", 6, "b")
    names = sorted(p.name for p in first.iterdir())
    assert names == sorted(p.name for p in second.iterdir())
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes()
    assert "wrote 6 scenarios" in capsys.readouterr().out


def test_eval_oracle_writes_report(tmp_path: Path) -> None:
    suite = _suite(tmp_path)
    out = tmp_path / "eval"
    assert main(["eval", "--suite", str(suite), "--oracle", "--out", str(out), "--workers", "1"]) == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["policy"] == "oracle"
    assert report["rows"][0]["turn_taking_success"] == 1.0
    assert len(list((out / "transcripts").glob("*.transcript.jsonl"))) == 3
    assert (out / "report.txt").read_text()


def test_latency_report_over_saved_transcripts(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    suite = _suite(tmp_path)
    out = tmp_path / "eval"
    main(["eval", "--suite", str(suite), "--oracle", "--out", str(out), "--workers", "1"])
    target = tmp_path / "latency.json"
    assert main(["latency-report", "--transcripts", str(out / "transcripts"), "--out", str(target)]) == EXIT_OK
    document = json.loads(target.read_text())
    assert document["transcripts"] == 3
    assert document["latency"]["turn_taking"]["count"] == 3
    assert "report:" in capsys.readouterr().out


def test_eval_missing_model_is_artifact_error(tmp_path: Path) -> None:
    suite = _suite(tmp_path)
    code = main(["eval", "--suite", str(suite), "--model", str(tmp_path / "nope.json"), "--out", str(tmp_path / "e")])
    assert code == EXIT_ARTIFACT


def test_eval_missing_suite_is_artifact_error(tmp_path: Path) -> None:
    code = main(["eval", "--suite", str(tmp_path / "nowhere"), "--oracle", "--out", str(tmp_path / "e")])
    assert code == EXIT_ARTIFACT


def test_eval_strategy_mismatch_is_config_error(tmp_path: Path) -> None:
    suite = _suite(tmp_path)
    model = _text_model(tmp_path, StrategyKind.IMPLICIT)
    code = main(["eval", "--suite", str(suite), "--model", str(model), "--out", str(tmp_path / "e")])
    assert code == EXIT_CONFIG


def test_bad_override_is_config_error(tmp_path: Path) -> None:
    suite = _suite(tmp_path)
    code = main(
        ["eval", "--suite", str(suite), "--oracle", "--out", str(tmp_path / "e"), "--set", "timing.block_ms=85"]
    )
    assert code == EXIT_CONFIG


def test_strict_eval_stops_on_text_while_listening(tmp_path: Path) -> None:
    suite = _suite(tmp_path)
    model = _text_model(tmp_path)
    args = ["eval", "--suite", str(suite), "--model", str(model), "--out", str(tmp_path / "e"), "--workers", "1"]
    assert main(args + ["--strict"]) == EXIT_PROTOCOL
    assert main(args) == EXIT_OK
    report = json.loads((tmp_path / "e" / "report.json").read_text())
    assert report["rows"][0]["violations"] > 0


def test_train_dpo_requires_init(tmp_path: Path) -> None:
    with pytest.raises(SystemExit) as info:
        main(["train", "dpo", "--data", str(tmp_path), "--out", str(tmp_path / "m.json")])
    assert info.value.code == 2


def test_inspect_suite_and_transcript(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    suite = _suite(tmp_path)
    out = tmp_path / "eval"
    main(["eval", "--suite", str(suite), "--oracle", "--out", str(out), "--workers", "1"])
    capsys.readouterr()
    assert main(["inspect", str(suite)]) == EXIT_OK
    assert "suite turn-taking: 3 scenarios" in capsys.readouterr().out
    transcript = next((out / "transcripts").glob("*.transcript.jsonl"))
    assert main(["inspect", str(transcript), "--blocks", "0:5"]) == EXIT_OK
    assert "turn ends:" in capsys.readouterr().out
    assert main(["inspect", str(out / "report.json")]) == EXIT_OK


def test_parse_command_defaults() -> None:
    say = parse_command("say")
    assert (say.kind, say.label, say.duration_ms) == (EventKind.USER_UTTERANCE, EventLabel.TURN_END, 1200)
    third = parse_command("say --third")
    assert (third.kind, third.label) == (EventKind.THIRD_PARTY_UTTERANCE, EventLabel.NONE)
    assert parse_command("barge").label is EventLabel.TRUE_BARGE_IN
    assert parse_command("barge --relevance 0.2").label is EventLabel.FALSE_BARGE_IN
    assert parse_command("backchannel").kind is EventKind.BACKCHANNEL
    assert parse_command("silence --ms 400").duration_ms == 400
    assert parse_command("").count == 1
    assert parse_command("step 7").count == 7
    assert parse_command("exit").name == "quit"
    assert not parse_command("help").adds_event


@pytest.mark.parametrize("line", ["dance", "step 0", "say --ms -5", "barge --relevance 2", "say --energy 0", "say --loud"])
def test_parse_command_rejects(line: str) -> None:
    with pytest.raises(CommandError):
        parse_command(line)


def test_stepped_console_replays_as_script(capsys: pytest.CaptureFixture[str]) -> None:
    cfg = EngineConfig()
    empty = console_scenario("console", echo_factor=cfg.echo.factor, response_tokens=24)
    policy = OraclePolicy(plan_ground_truth(empty, cfg.timing), history=cfg.training.history)
    scenario, transcript = run_console(policy, cfg, realtime=False, lines=["say", "oops", "step 60", "quit"])
    output = capsys.readouterr().out
    assert "error:" in output
    assert scenario.end_ms == 60 * cfg.timing.block_ms
    assert len(scenario.events) == 1

    replay = run_conversation(
        scenario,
        OraclePolicy(plan_ground_truth(scenario, cfg.timing), history=cfg.training.history),
        cfg.strategy,
        cfg,
    )
    assert replay.header.turn_ends_ms == transcript.header.turn_ends_ms
    assert [r.model_dump() for r in replay.records] == [r.model_dump() for r in transcript.records]
    starts = [e.ms for r in transcript.records for e in r.playback if e.kind == "speech_start"]
    assert len(starts) == 1


@pytest.mark.skipif(not os.getenv("DUPLEX_RUN_SLOW"), reason="set DUPLEX_RUN_SLOW=1 to run training end to end")
def test_train_sft_then_dpo(tmp_path: Path) -> None:
    data = _suite(tmp_path, "mixed", 10, "data")
    sft = tmp_path / "sft.json"
    assert main(["train", "sft", "--data", str(data), "--out", str(sft), "--set", "training.steps=200"]) == EXIT_OK
    dpo = tmp_path / "dpo.json"
    code = main(
        [
            "train", "dpo", "--data", str(data), "--init", str(sft), "--out", str(dpo),
            "--set", "training.dpo_steps=20", "--set", "training.monitor_every=10", "--set", "training.dpo_lr=5e-3",
        ]
    )
    assert code == EXIT_OK
    document = json.loads(dpo.read_text())
    assert document["artifact"] == "policy_model"
