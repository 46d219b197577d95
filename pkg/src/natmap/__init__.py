"""Hyperbolic barycenters, natural maps, and triangulated representation volumes."""

__version__ = "0.1.0"
