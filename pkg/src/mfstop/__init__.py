"""Entropy-regularized time-consistent stopping for mean-field systems."""

__version__ = "0.1.0"
