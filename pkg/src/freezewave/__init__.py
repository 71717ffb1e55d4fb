"""Freezing-method solvers for equivariant evolution equations and tools for
the spectral stability of the computed waves."""

__version__ = "0.1.0"
