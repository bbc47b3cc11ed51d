"""Service layer for suite generation."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from duplex_engine.schemas.scenario import Scenario, SuiteKind, SuiteManifest
from duplex_engine.schemas.timing import TimingConfig
from duplex_engine.sim.scenarios import generate_suite
from duplex_engine.sim.storage import build_manifest, write_suite

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class GenerateResult:
    """Outcome of a generate run.

    Attributes:
        manifest: The written suite manifest.
        manifest_path: Where the manifest was written.
        scenarios: Generated scenarios in manifest order.
    """

    manifest: SuiteManifest
    manifest_path: Path
    scenarios: list[Scenario]


def generate_to_dir(
    kind: SuiteKind | str,
    count: int,
    seed: int,
    out_dir: Path | str,
    *,
    timing: TimingConfig | None = None,
    echo_factor: float = 1.0,
) -> GenerateResult:
    """Generate a suite and write it as one JSON file per scenario plus a manifest.

    Raises:
        ValueError: Unknown kind or non-positive count.
        ArtifactError: The directory cannot be written.
    """
    kind = SuiteKind(kind)
    scenarios = generate_suite(kind, count, seed, timing=timing, echo_factor=echo_factor)
    manifest = build_manifest(kind, seed, echo_factor, scenarios)
    path = write_suite(out_dir, manifest, scenarios)
    return GenerateResult(manifest=manifest, manifest_path=path, scenarios=scenarios)
