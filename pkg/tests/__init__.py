"""Unit test suite for the duplex dialogue engine.

This package contains pytest tests for:
- test_timebase.py: block arithmetic, token kinds and the state machine
- test_encoder.py / test_synth.py: streaming features and reply playback
- test_interleaver.py: labelling, sequence layout and the golden files in golden/
- test_policy.py / test_training.py: features, the scorer and its training
- test_sim.py: suites, ground-truth plans and the block engine
- test_metrics.py: turn-taking, interruption and latency metrics
- test_config.py: environment settings, config loading and logging setup
- test_cli.py: the command line and the stepped console

End-to-end training, full-size oracle suites and the thousand-dialogue
interleaver sweep run only when DUPLEX_RUN_SLOW is set.
"""
