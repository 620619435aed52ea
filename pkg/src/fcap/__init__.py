"""Finsler p-capacity of convex bodies and numerical checks of its rigidity properties."""

__version__ = "0.1.0"
