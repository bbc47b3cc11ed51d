"""Run DPO from one SFT model at several batch sizes and print each monitor table."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from duplex_engine.config import DEFAULT_WORKERS
from duplex_engine.errors import DuplexError
from duplex_engine.logging_config import configure_logging
from duplex_engine.metrics.report import training_log_table
from duplex_engine.schemas.config import load_config
from duplex_engine.services.training_service import TrainResult, train_preference

BATCH_SIZES = (128, 256, 512)


def _sweep(args: argparse.Namespace) -> dict[int, TrainResult]:
    """Train one DPO model per batch size.

    Args:
        args: Parsed command-line arguments.

    Returns:
        Results keyed by batch size.
    """
    results: dict[int, TrainResult] = {}
    for batch in args.batches:
        cfg = load_config(args.config, [*args.overrides, f"training.dpo_batch={batch}"])
        results[batch] = train_preference(
            args.data,
            cfg,
            args.init,
            args.out / f"dpo_b{batch}.json",
            monitor_dir=args.monitor,
            workers=args.workers,
        )
    return results


def main() -> None:
    """Entry point for the batch-size sweep."""
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data", type=Path, required=True, help="training suite")
    parser.add_argument("--init", type=Path, required=True, help="SFT model to start from")
    parser.add_argument("--monitor", type=Path, default=None, help="monitor suite (default: --data)")
    parser.add_argument("--out", type=Path, required=True, help="directory for models and logs")
    parser.add_argument("--config", type=Path, default=None)
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    parser.add_argument("--batches", type=int, nargs="+", default=list(BATCH_SIZES), choices=BATCH_SIZES)
    parser.add_argument("--workers", type=int, default=DEFAULT_WORKERS)
    args = parser.parse_args()

    configure_logging()
    try:
        results = _sweep(args)
    except DuplexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(1) from exc
    for batch, result in results.items():
        print(f"batch {batch}")
        print(training_log_table(result.log.rows))


if __name__ == "__main__":
    main()
