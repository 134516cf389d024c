"""Pseudo-bearing RF source tracking from a gyrating single-antenna UAV."""

__version__ = "0.1.0"
