"""Numerical experiments for Strichartz-type estimates of e^{itD^a}."""

__version__ = "0.1.0"
