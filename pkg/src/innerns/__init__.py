"""Nested Sampling with an Inner Nested Sampling proposal geometry for Dirichlet functionals."""

__version__ = "0.1.0"
