"""Spectral simulation of multi-species Keller-Segel-Navier-Stokes flow near Poiseuille flow."""

__version__ = "0.1.0"
