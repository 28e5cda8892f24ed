"""Approximation of endpoint-singular functions by short sums of non-integer powers."""

__version__ = "0.1.0"
