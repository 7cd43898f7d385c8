"""Kac-Rice level-set statistics for Gaussian processes and fields, with Monte Carlo cross-checks."""

__version__ = "0.1.0"
