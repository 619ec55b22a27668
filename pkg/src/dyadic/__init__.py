"""Numerical laboratory for the dyadic shell model of the Navier--Stokes equations."""

__version__ = "0.1.0"
