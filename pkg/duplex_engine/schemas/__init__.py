"""Pydantic schemas for the duplex engine.

This package contains:
- timing.py: TimingConfig, the block and synthesis timing constants
- config.py: EngineConfig, flag overrides and the config hash
- artifact.py: schema-versioned JSON / JSONL reading and writing
- scenario.py: scenario scripts and suite manifests
- transcript.py: per-block transcript records
- model.py: policy model files and training logs
- report.py: evaluation and latency reports

Every persisted document carries ``schema_version`` and an ``artifact`` tag;
readers reject documents written by a newer major version.
"""
