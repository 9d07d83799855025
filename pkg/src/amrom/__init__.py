"""Surrogate modeling toolkit for a moving-laser deposition thermal simulator.

Provides a desk-scale finite-difference data generator, a 1-D Fourier neural
operator and a feed-forward baseline (both with hand-derived gradients), and
an end-to-end sampling / training / benchmarking pipeline with a CLI.
"""

__version__ = "0.1.0"
