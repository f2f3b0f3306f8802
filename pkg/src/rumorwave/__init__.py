"""Rumor spreading with random awareness: exact simulation and fluid limits."""

__version__ = "0.1.0"
