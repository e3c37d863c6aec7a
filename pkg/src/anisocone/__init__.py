"""Numerical verification toolkit for anisotropic Sobolev inequalities in convex cones."""

__version__ = "0.1.0"
