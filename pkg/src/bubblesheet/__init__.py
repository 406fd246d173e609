"""Numerical lab for ancient noncollapsed mean curvature flows in R^4."""

__version__ = "0.1.0"
