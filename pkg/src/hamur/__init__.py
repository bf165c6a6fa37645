"""Hyper-network generated domain adapters for multi-domain CTR prediction."""

__version__ = "0.1.0"
