"""Hybrid variational solver for mixed binary optimization, applied to transaction settlement."""

__version__ = "0.1.0"
