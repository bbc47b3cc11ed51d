"""Exception hierarchy shared by the engine, the services and the CLI."""

from __future__ import annotations

from typing import Any


class DuplexError(RuntimeError):
    """Base class for all engine errors."""


class ConfigError(DuplexError):
    """Raised when an engine config is invalid or an override cannot be applied."""


class ArtifactError(DuplexError):
    """Raised when a file cannot be read, written or validated against its schema."""

    def __init__(self, path: Any, message: str) -> None:
        self.path = str(path)
        super().__init__(f"{self.path}: {message}")


class LayoutError(DuplexError, ValueError):
    """Raised when an interleaved sequence violates the per-block layout."""

    def __init__(self, item_index: int, message: str) -> None:
        self.item_index = item_index
        super().__init__(f"item {item_index}: {message}")


class LabelError(DuplexError, ValueError):
    """Raised for misaligned labels, illegal token kinds or out-of-range events."""


class TrainingDivergenceError(DuplexError):
    """Raised when a training loss becomes non-finite.

    Attributes:
        last_good: The last parameters whose loss was finite.
        diagnostics: Step index and loss components at the failure.
    """

    def __init__(self, message: str, *, last_good: Any, diagnostics: dict[str, Any]) -> None:
        self.last_good = last_good
        self.diagnostics = diagnostics
        super().__init__(message)


class MetricUndefinedError(DuplexError, ValueError):
    """Raised when a metric's denominator is zero."""


class ProtocolViolationError(DuplexError):
    """Raised in strict runs when a policy emits text while listening."""


EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_ARTIFACT = 4
EXIT_PROTOCOL = 5
EXIT_DIVERGENCE = 6
EXIT_METRIC = 7
