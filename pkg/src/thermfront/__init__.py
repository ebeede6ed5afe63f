"""Thermalization fronts in boundary-driven localized spin chains."""

__version__ = "0.1.0"
