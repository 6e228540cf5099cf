"""Exact linear optimization over polymatroids with side constraints."""

__version__ = "0.1.0"
