"""Multimodal late-fusion damage severity pipeline."""

__version__ = "0.1.0"
