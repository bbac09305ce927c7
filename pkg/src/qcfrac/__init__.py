"""Exact and high-precision laboratory for q-continued fractions at roots of unity."""

__version__ = "0.1.0"
