"""Numerics for non-intersecting Brownian motions near critical points:
free-convolution densities, finite-n and limiting correlation kernels,
Fredholm determinants and Monte-Carlo checks."""

__version__ = "0.1.0"
