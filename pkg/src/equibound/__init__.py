"""Certified k-point semidefinite bounds for equiangular lines and
spherical codes with finitely many prescribed inner products."""

__version__ = "0.1.0"
