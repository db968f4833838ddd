"""Desk-scale multimodal growth and development assessment engine."""

__version__ = "0.1.0"
