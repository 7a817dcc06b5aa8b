"""Numerical laboratory for multi-phase buck converters and singular integro-differential systems."""

__version__ = "0.1.0"
