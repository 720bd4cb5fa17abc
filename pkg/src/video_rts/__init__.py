"""Outcome-reward GRPO training and sparse-to-dense test-time scaling for video MCQA."""

__version__ = "0.1.0"
