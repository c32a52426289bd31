"""Exact lattice, order, torus-measure and complex-torus computations."""

__version__ = "0.1.0"
