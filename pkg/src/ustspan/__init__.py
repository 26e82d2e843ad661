"""Uniform spanning trees on lattice boxes and their spanning clusters."""

__version__ = "0.1.0"
