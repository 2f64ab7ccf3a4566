"""Spectral solvers for time-fractional systems with Hermitian matrix symbols."""

__version__ = "0.1.0"
