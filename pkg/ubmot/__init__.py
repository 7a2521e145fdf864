"""Spectral statistics of unitary Dyson Brownian motion started from the identity."""

__version__ = "1.0.0"
