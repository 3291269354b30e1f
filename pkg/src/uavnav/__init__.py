"""Jamming-resilient multi-UAV path planning simulator and learning stack."""

__version__ = "0.1.0"
