"""Pseudo-spectral Keller-Segel dynamics under strong shear, with diagnostics."""

__version__ = "0.1.0"
