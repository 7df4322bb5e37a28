"""Lateral-access mechanical search: shelf simulator, occupancy oracle, search policies and benchmark"""

__version__ = "1.0.0"
