"""Core package for the block-synchronous full-duplex dialogue engine."""

__version__ = "0.1.0"
