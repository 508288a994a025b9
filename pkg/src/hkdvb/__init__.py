"""Stochastic hybrid KdV-Burgers simulation and estimate checks."""

__version__ = "0.1.0"
