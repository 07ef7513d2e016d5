"""Objective skin tone estimation and per-tone-group fairness auditing."""

__version__ = "0.1.0"
