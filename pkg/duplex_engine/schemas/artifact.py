"""Versioned JSON / JSONL persistence shared by every artifact the engine writes."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Iterable, TypeVar

from pydantic import BaseModel, ValidationError

from duplex_engine.errors import ArtifactError

logger = logging.getLogger(__name__)

SCHEMA_MAJOR = 1
SCHEMA_MINOR = 0
SCHEMA_VERSION = f"{SCHEMA_MAJOR}.{SCHEMA_MINOR}"

ModelT = TypeVar("ModelT", bound=BaseModel)


def canonical_json(data: Any) -> str:
    """Compact, key-sorted JSON used for hashing."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def _pretty_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def check_schema_version(raw: Any, path: Path | str, expected_artifact: str | None = None) -> None:
    """Reject documents written by a newer major version or of the wrong kind."""
    if not isinstance(raw, dict):
        raise ArtifactError(path, "expected a JSON object")
    version = raw.get("schema_version")
    if not isinstance(version, str) or "." not in version:
        raise ArtifactError(path, f"missing or malformed schema_version {version!r}")
    major = version.split(".", 1)[0]
    if not major.isdigit():
        raise ArtifactError(path, f"malformed schema_version {version!r}")
    if int(major) > SCHEMA_MAJOR:
        raise ArtifactError(
            path, f"schema version {version} is newer than supported {SCHEMA_VERSION}"
        )
    if expected_artifact is not None and raw.get("artifact") != expected_artifact:
        raise ArtifactError(
            path, f"expected artifact {expected_artifact!r}, found {raw.get('artifact')!r}"
        )


def write_model(model: BaseModel, path: Path | str) -> Path:
    """Write a pydantic document as sorted, indented JSON."""
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(_pretty_json(model.model_dump(mode="json")), encoding="utf-8")
    except OSError as exc:
        logger.error("Failed to write %s: %s", target, exc)
        raise ArtifactError(target, f"cannot write: {exc}") from exc
    return target


def read_model(cls: type[ModelT], path: Path | str, artifact: str | None = None) -> ModelT:
    """Read and validate a JSON document.

    Raises:
        ArtifactError: The file is unreadable, not JSON, too new, or fails validation.
    """
    source = Path(path)
    try:
        raw = json.loads(source.read_text(encoding="utf-8"))
    except OSError as exc:
        logger.error("Failed to read %s: %s", source, exc)
        raise ArtifactError(source, f"cannot read: {exc}") from exc
    except json.JSONDecodeError as exc:
        logger.error("Invalid JSON in %s: %s", source, exc)
        raise ArtifactError(source, f"invalid JSON: {exc}") from exc
    check_schema_version(raw, source, artifact)
    try:
        return cls.model_validate(raw)
    except ValidationError as exc:
        logger.error("Schema validation failed for %s", source)
        raise ArtifactError(source, f"schema validation failed: {exc}") from exc


def write_jsonl(path: Path | str, header: BaseModel, rows: Iterable[BaseModel | dict[str, Any]]) -> Path:
    """Write a header line followed by one JSON object per row."""
    target = Path(path)
    lines = [json.dumps(header.model_dump(mode="json"), sort_keys=True)]
    for row in rows:
        payload = row.model_dump(mode="json") if isinstance(row, BaseModel) else row
        lines.append(json.dumps(payload, sort_keys=True))
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        logger.error("Failed to write %s: %s", target, exc)
        raise ArtifactError(target, f"cannot write: {exc}") from exc
    return target


def read_jsonl(path: Path | str, artifact: str | None = None) -> tuple[dict[str, Any], list[dict[str, Any]]]:
    """Return the parsed header line and the remaining rows of a JSONL artifact."""
    source = Path(path)
    try:
        text = source.read_text(encoding="utf-8")
    except OSError as exc:
        logger.error("Failed to read %s: %s", source, exc)
        raise ArtifactError(source, f"cannot read: {exc}") from exc
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise ArtifactError(source, "empty file, header line missing")
    try:
        parsed = [json.loads(line) for line in lines]
    except json.JSONDecodeError as exc:
        raise ArtifactError(source, f"invalid JSON line: {exc}") from exc
    header, rows = parsed[0], parsed[1:]
    check_schema_version(header, source, artifact)
    return header, rows
