"""Numerical laboratory for i.i.d. products of random 2x2 matrices."""

__version__ = "0.1.0"
