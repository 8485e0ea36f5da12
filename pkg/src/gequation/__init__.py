"""Effective burning velocities of G-equations in periodic flows."""

__version__ = "0.1.0"
