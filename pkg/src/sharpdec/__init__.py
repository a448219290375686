"""Numerical sharpness checks of refined decoupling on a lattice free Schrodinger solution."""

__version__ = "0.1.0"
