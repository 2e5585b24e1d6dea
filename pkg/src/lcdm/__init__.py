"""Labeled cortical distance map analysis."""

__version__ = "0.1.0"
