"""Spectral ground states of fractional NLS and Choquard equations."""

__version__ = "0.1.0"
