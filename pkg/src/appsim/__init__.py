"""Approximative positive-P modelling of HHG driven by quantum light."""

__version__ = "0.1.0"
