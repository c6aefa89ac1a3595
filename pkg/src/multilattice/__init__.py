"""Deterministic multiple rank-1 lattices for sampling and reconstructing
multivariate trigonometric polynomials."""

__version__ = "0.1.0"
