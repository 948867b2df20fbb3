"""Minimal surfaces in the Heisenberg group from loop-group potentials."""

__version__ = "0.1.0"
