"""Bayesian Tensor Product Neural Networks."""

__version__ = "0.1.0"
