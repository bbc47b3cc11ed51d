"""Suite directories, scenario files and transcript JSONL files."""

from __future__ import annotations

import hashlib
import logging
from collections import Counter
from pathlib import Path
from typing import Sequence

from pydantic import ValidationError

from duplex_engine.errors import ArtifactError
from duplex_engine.schemas.artifact import read_jsonl, read_model, write_jsonl, write_model
from duplex_engine.schemas.scenario import Scenario, SuiteKind, SuiteManifest
from duplex_engine.schemas.transcript import BlockRecord, Transcript, TranscriptHeader

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
TRANSCRIPT_SUFFIX = ".transcript.jsonl"


def build_manifest(kind: SuiteKind, seed: int, echo_factor: float, scenarios: Sequence[Scenario]) -> SuiteManifest:
    labels = Counter(event.label.value for scenario in scenarios for event in scenario.events)
    settings = Counter(scenario.setting.value for scenario in scenarios)
    return SuiteManifest(
        kind=kind,
        count=len(scenarios),
        seed=seed,
        echo_factor=echo_factor,
        scenario_ids=[scenario.id for scenario in scenarios],
        files=[f"{scenario.id}.json" for scenario in scenarios],
        label_counts=dict(sorted(labels.items())),
        setting_counts=dict(sorted(settings.items())),
    )


def write_suite(out_dir: Path | str, manifest: SuiteManifest, scenarios: Sequence[Scenario]) -> Path:
    """Write one JSON file per scenario plus the manifest; returns the manifest path."""
    target = Path(out_dir)
    for scenario, name in zip(scenarios, manifest.files):
        write_model(scenario, target / name)
    path = write_model(manifest, target / MANIFEST_NAME)
    logger.info("Wrote %d scenarios to %s", len(scenarios), target)
    return path


def read_scenario(path: Path | str) -> Scenario:
    return read_model(Scenario, path, "scenario")


def read_suite(suite_dir: Path | str) -> tuple[SuiteManifest, list[Scenario]]:
    """Read a suite directory in manifest order.

    Raises:
        ArtifactError: Missing manifest or scenario file, or a schema failure.
    """
    root = Path(suite_dir)
    manifest = read_model(SuiteManifest, root / MANIFEST_NAME, "suite_manifest")
    scenarios = [read_scenario(root / name) for name in manifest.files]
    return manifest, scenarios


def manifest_hash(suite_dir: Path | str) -> str:
    """sha256 of the manifest file bytes."""
    path = Path(suite_dir) / MANIFEST_NAME
    try:
        return hashlib.sha256(path.read_bytes()).hexdigest()
    except OSError as exc:
        raise ArtifactError(path, f"cannot read: {exc}") from exc


def transcript_path(out_dir: Path | str, scenario_id: str, echo_factor: float | None = None) -> Path:
    name = scenario_id if echo_factor is None else f"{scenario_id}@echo{echo_factor:g}"
    return Path(out_dir) / f"{name}{TRANSCRIPT_SUFFIX}"


def write_transcript(path: Path | str, transcript: Transcript) -> Path:
    return write_jsonl(path, transcript.header, transcript.records)


def read_transcript(path: Path | str) -> Transcript:
    """Read a transcript JSONL file.

    Raises:
        ArtifactError: Unreadable file, newer schema or a malformed record.
    """
    raw_header, rows = read_jsonl(path, "transcript")
    try:
        header = TranscriptHeader.model_validate(raw_header)
        records = [BlockRecord.model_validate(row) for row in rows]
    except ValidationError as exc:
        logger.error("Schema validation failed for %s", path)
        raise ArtifactError(path, f"schema validation failed: {exc}") from exc
    if len(records) != header.n_blocks:
        raise ArtifactError(path, f"header announces {header.n_blocks} blocks, file has {len(records)}")
    return Transcript(header=header, records=records)


def read_transcripts(directory: Path | str) -> list[Transcript]:
    """All transcripts of a directory, in file-name order."""
    root = Path(directory)
    if not root.is_dir():
        raise ArtifactError(root, "not a directory")
    return [read_transcript(path) for path in sorted(root.glob(f"*{TRANSCRIPT_SUFFIX}"))]
