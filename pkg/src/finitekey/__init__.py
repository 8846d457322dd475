"""Finite-key secret-key rates for practical BB84 implementations."""

__version__ = "0.1.0"
