"""Truncated Hilbert/Riesz transforms: assembly, ill-posedness and cost of approximation."""

__version__ = "0.1.0"
