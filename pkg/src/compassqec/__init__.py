"""Simulation and decoding toolkit for the dynamic compass code on heavy-hex hardware."""

__version__ = "0.1.0"
