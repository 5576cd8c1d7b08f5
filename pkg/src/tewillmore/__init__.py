"""Delaunay loop potentials and translationally equivariant Willmore surfaces."""

__version__ = "0.1.0"
