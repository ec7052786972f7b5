"""Depth-aware rain and haze synthesis."""

__version__ = "0.1.0"
