"""Structured Bayesian variable selection for multivariate regression."""

__version__ = "0.1.0"
