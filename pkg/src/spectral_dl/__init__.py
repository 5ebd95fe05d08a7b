"""Parametric dictionary learning for line spectral estimation."""

__version__ = "0.1.0"
