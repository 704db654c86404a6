"""Numerical experiments for sublevel-set variational principles and their applications."""

__version__ = "0.1.0"
