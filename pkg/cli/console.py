"""Interactive block-stepped console around the duplex engine.

In real-time mode a ticker thread owns the engine and advances it one block
per tick while the main thread reads operator commands and hands them over
through a queue. With ``--no-realtime`` every command is applied immediately
and blocks only advance on ``step`` (or an empty line).
"""

from __future__ import annotations

import argparse
import logging
import queue
import shlex
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

from duplex_engine.config import CONSOLE_TICK_SCALE
from duplex_engine.policy.model import Policy
from duplex_engine.schemas.artifact import write_model
from duplex_engine.schemas.config import EngineConfig
from duplex_engine.schemas.scenario import EventKind, EventLabel, Scenario, ScenarioEvent, Setting, SuiteKind
from duplex_engine.schemas.transcript import BlockRecord, Transcript
from duplex_engine.sim.engine import DuplexEngine
from duplex_engine.sim.scenarios import plan_ground_truth, run_blocks
from duplex_engine.sim.storage import write_transcript
from duplex_engine.timebase import block_start_ms

logger = logging.getLogger(__name__)

USAGE = """commands:
  say [--ms D] [--relevance R] [--energy E] [--third]     utterance (user turn, or third-party talk)
  barge [--ms D] [--relevance R] [--energy E] [--third]   interrupting speech (relevance >= 0.5 is a true barge-in)
  backchannel [--ms D] [--energy E]                       short acknowledgement
  silence [--ms D]                                        scripted silence
  step [N]                                                advance N blocks (stepped mode; empty line = 1)
  help                                                    this text
  quit                                                    end the session and save"""

TRUE_BARGE_IN_RELEVANCE = 0.5


class CommandError(ValueError):
    """Raised for a console line that does not parse."""


class _CommandParser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise CommandError(message)


def _build_parser() -> _CommandParser:
    parser = _CommandParser(prog="", add_help=False)
    sub = parser.add_subparsers(dest="name", parser_class=_CommandParser)
    for name, ms, relevance, energy in (("say", 1200, 0.9, 0.8), ("barge", 800, 0.9, 0.8)):
        cmd = sub.add_parser(name, add_help=False)
        cmd.add_argument("--ms", type=int, default=ms)
        cmd.add_argument("--relevance", type=float, default=relevance)
        cmd.add_argument("--energy", type=float, default=energy)
        cmd.add_argument("--third", action="store_true")
    backchannel = sub.add_parser("backchannel", add_help=False)
    backchannel.add_argument("--ms", type=int, default=320)
    backchannel.add_argument("--energy", type=float, default=0.6)
    silence = sub.add_parser("silence", add_help=False)
    silence.add_argument("--ms", type=int, default=800)
    step = sub.add_parser("step", add_help=False)
    step.add_argument("count", nargs="?", type=int, default=1)
    sub.add_parser("help", add_help=False)
    sub.add_parser("quit", add_help=False, aliases=["exit"])
    return parser


_PARSER = _build_parser()


@dataclass(frozen=True, slots=True)
class ConsoleCommand:
    """A parsed console line; ``event`` builds the scripted event once its start is known."""

    name: str
    count: int = 0
    kind: EventKind | None = None
    label: EventLabel = EventLabel.NONE
    duration_ms: int = 0
    relevance: float = 0.0
    energy: float = 0.8

    @property
    def adds_event(self) -> bool:
        return self.kind is not None

    def event(self, start_ms: int) -> ScenarioEvent:
        if self.kind is None:
            raise CommandError(f"{self.name} does not add an event")
        return ScenarioEvent(
            kind=self.kind,
            start_ms=start_ms,
            duration_ms=self.duration_ms,
            relevance=self.relevance,
            label=self.label,
            energy=self.energy,
        )


def parse_command(line: str) -> ConsoleCommand:
    """Parse one console line.

    Raises:
        CommandError: Unknown command, bad flag or out-of-range value.
    """
    words = shlex.split(line)
    if not words:
        return ConsoleCommand(name="step", count=1)
    try:
        ns = _PARSER.parse_args(words)
    except ValueError as exc:
        raise CommandError(str(exc)) from exc
    name = "quit" if ns.name == "exit" else ns.name
    if name in {"help", "quit"}:
        return ConsoleCommand(name=name)
    if name == "step":
        if ns.count < 1:
            raise CommandError("step count must be at least 1")
        return ConsoleCommand(name=name, count=ns.count)
    if ns.ms <= 0:
        raise CommandError("--ms must be positive")
    energy = getattr(ns, "energy", 0.8)
    if not 0.0 < energy <= 1.0:
        raise CommandError("--energy must lie in (0, 1]")
    if name == "silence":
        return ConsoleCommand(name=name, kind=EventKind.SILENCE, duration_ms=ns.ms)
    if name == "backchannel":
        return ConsoleCommand(
            name=name, kind=EventKind.BACKCHANNEL, label=EventLabel.BACKCHANNEL,
            duration_ms=ns.ms, relevance=0.1, energy=energy,
        )
    if not 0.0 <= ns.relevance <= 1.0:
        raise CommandError("--relevance must lie in [0, 1]")
    kind = EventKind.THIRD_PARTY_UTTERANCE if ns.third else EventKind.USER_UTTERANCE
    if name == "say":
        label = EventLabel.NONE if ns.third else EventLabel.TURN_END
    else:
        label = EventLabel.TRUE_BARGE_IN if ns.relevance >= TRUE_BARGE_IN_RELEVANCE else EventLabel.FALSE_BARGE_IN
    return ConsoleCommand(
        name=name, kind=kind, label=label, duration_ms=ns.ms, relevance=ns.relevance, energy=energy
    )


def live_line(record: BlockRecord) -> str:
    return (
        f"block {record.block_index:5d}  {record.state.value:9s} -> {record.state_after.value:9s}"
        f"  {record.token:14s}  buffer {record.buffered_ms:5d} ms"
    )


def console_scenario(scenario_id: str, *, echo_factor: float, response_tokens: int) -> Scenario:
    return Scenario(
        id=scenario_id,
        kind=SuiteKind.MIXED,
        setting=Setting.INDEPENDENT,
        echo_factor=echo_factor,
        response_tokens=response_tokens,
        multi_speaker=True,
    )


class ConsoleSession:
    """Engine plus the bookkeeping needed to close a session.

    Args:
        engine: Engine to drive; only the thread that ticks it may call these methods.
        grace_ms: Blocks run after ``quit`` before the transcript is taken.
    """

    def __init__(self, engine: DuplexEngine, grace_ms: int) -> None:
        self.engine = engine
        self.grace_ms = grace_ms

    def apply(self, command: ConsoleCommand) -> None:
        start = block_start_ms(self.engine.block_index, self.engine.timing)
        self.engine.add_event(command.event(start))

    def tick(self) -> BlockRecord:
        return self.engine.step()

    def finish(self) -> tuple[Scenario, Transcript]:
        """Fix the script's end at the current block and play out the grace period.

        The returned scenario reproduces the transcript when run as a script.
        """
        engine = self.engine
        end = block_start_ms(engine.block_index, engine.timing)
        engine.scenario = engine.scenario.model_copy(update={"end_ms": end})
        plan = plan_ground_truth(engine.scenario, engine.timing)
        total = run_blocks(engine.scenario, plan, engine.timing, self.grace_ms)
        while engine.block_index < total:
            engine.step()
        logger.info("Console session %s closed after %d blocks", engine.scenario.id, engine.block_index)
        return engine.scenario, engine.transcript()


def run_stepped(session: ConsoleSession, lines: Iterable[str], emit: Callable[[str], None] = print) -> None:
    """Apply commands in order; blocks advance only on ``step``."""
    for line in lines:
        try:
            command = parse_command(line)
        except CommandError as exc:
            emit(f"error: {exc}\n{USAGE}")
            continue
        if command.name == "quit":
            return
        if command.name == "help":
            emit(USAGE)
        elif command.adds_event:
            session.apply(command)
        else:
            for _ in range(command.count):
                emit(live_line(session.tick()))


def _ticker(session: ConsoleSession, commands: "queue.Queue[ConsoleCommand]", stop: threading.Event, period_s: float) -> None:
    deadline = time.monotonic()
    while not stop.is_set():
        while True:
            try:
                session.apply(commands.get_nowait())
            except queue.Empty:
                break
        record = session.tick()
        print("\r" + live_line(record), end="", flush=True)
        deadline += period_s
        time.sleep(max(0.0, deadline - time.monotonic()))


def run_realtime(session: ConsoleSession, read_line: Callable[[], str] = input, tick_scale: float = CONSOLE_TICK_SCALE) -> None:
    """Tick the engine on a background thread while commands are read here."""
    commands: queue.Queue[ConsoleCommand] = queue.Queue()
    stop = threading.Event()
    period = session.engine.timing.block_ms / 1000.0 * tick_scale
    ticker = threading.Thread(target=_ticker, args=(session, commands, stop, period), daemon=True)
    ticker.start()
    try:
        while True:
            try:
                line = read_line()
            except EOFError:
                break
            if not line.strip():
                continue
            try:
                command = parse_command(line)
            except CommandError as exc:
                print(f"\nerror: {exc}\n{USAGE}")
                continue
            if command.name == "quit":
                break
            if command.name == "help":
                print("\n" + USAGE)
            elif command.adds_event:
                commands.put(command)
            else:
                print("\nstep only applies with --no-realtime")
    finally:
        stop.set()
        ticker.join()
        print()
    while not commands.empty():
        session.apply(commands.get_nowait())


def run_console(
    policy: Policy,
    cfg: EngineConfig,
    *,
    realtime: bool = True,
    save: Path | str | None = None,
    scenario_out: Path | str | None = None,
    session_id: str = "console",
    response_tokens: int = 24,
    lines: Iterable[str] | None = None,
) -> tuple[Scenario, Transcript]:
    """Run an interactive session and save its transcript and replayable scenario.

    ``lines`` replaces standard input in stepped mode.
    """
    scenario = console_scenario(session_id, echo_factor=cfg.echo.factor, response_tokens=response_tokens)
    engine = DuplexEngine(scenario, policy, cfg)
    session = ConsoleSession(engine, cfg.grace_ms)
    print(USAGE)
    if realtime:
        run_realtime(session)
    else:
        run_stepped(session, lines if lines is not None else _stdin_lines())
    scenario, transcript = session.finish()
    if save is not None:
        write_transcript(save, transcript)
        print(f"transcript saved to {save}")
    if scenario_out is not None:
        write_model(scenario, scenario_out)
        print(f"scenario saved to {scenario_out}")
    return scenario, transcript


def _stdin_lines() -> Iterable[str]:
    while True:
        try:
            yield input("> ")
        except EOFError:
            return
