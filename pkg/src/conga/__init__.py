"""Simulation and verification toolkit for the Brownian conga line."""

__version__ = "0.1.0"
