"""Finite-gap Toda lattice coefficients from hyperelliptic curves and the spectra of their Jacobi operators."""

__version__ = "0.1.0"
