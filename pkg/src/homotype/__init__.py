"""Finite models of spaces of homogeneous type, dyadic cubes and product H^1 / BMO."""
__version__ = "0.1.0"
