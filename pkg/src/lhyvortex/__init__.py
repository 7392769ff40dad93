"""Vortex ground states and dynamics of the cubic-quartic nonlinear Schroedinger equation."""

__version__ = "0.1.0"
