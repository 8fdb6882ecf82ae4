"""Relativistic Landau kernel, regularized solver and entropy diagnostics."""

__version__ = "0.1.0"
