"""Deterministic laparoscopic training simulator with dual-view feedback."""

__version__ = "0.1.0"
