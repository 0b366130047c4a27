"""Replay prioritization (uniform, PER, CER, CUER) with a small TD3 test bed."""

__version__ = "0.1.0"
