"""Simulation and numerical checks for a seasonal dormancy Cannings model and its coalescent limits."""

__version__ = "0.1.0"
