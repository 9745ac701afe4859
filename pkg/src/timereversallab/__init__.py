"""Synthetic-measurement laboratory for processed time reversal of the wave equation."""

__version__ = "0.1.0"
