"""Frequency-domain progressive depth estimation toolkit."""

__version__ = "0.1.0"
