"""Graph-based change-point detection for sequences of repeated measurements."""

__version__ = "0.1.0"
