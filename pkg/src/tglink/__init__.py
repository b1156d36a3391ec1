"""Temporal link prediction with node memory and structural-feature transfer."""

__version__ = "0.1.0"
