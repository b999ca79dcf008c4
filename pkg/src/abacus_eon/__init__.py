"""Impairment-aware joint RMLSA engine for elastic optical networks."""

__version__ = "0.1.0"
