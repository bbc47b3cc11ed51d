"""Scenario generation, frame synthesis and the closed-loop conversation engine."""

from duplex_engine.sim.engine import DuplexEngine, run_conversation  # noqa: F401
from duplex_engine.sim.frames import echo_inject  # noqa: F401
from duplex_engine.sim.scenarios import generate_suite, plan_ground_truth  # noqa: F401
