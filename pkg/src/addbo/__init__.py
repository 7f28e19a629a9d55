"""Bayesian optimization with additive Gaussian-process models."""

__version__ = "0.1.0"
