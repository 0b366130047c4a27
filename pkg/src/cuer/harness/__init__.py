"""Experiment runner, no-learning replay simulator and analysis tools."""
