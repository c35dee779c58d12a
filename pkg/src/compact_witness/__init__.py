"""Exact witnesses of sequential and closed compactness."""

__version__ = "0.1.0"
