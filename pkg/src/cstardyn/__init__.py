"""Numerical tools for holomorphic self-maps of the punctured plane."""

__version__ = "0.1.0"
