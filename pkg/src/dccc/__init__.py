"""Simulation and benchmarking toolkit for dynamically condensed colour codes."""

__version__ = "0.1.0"
