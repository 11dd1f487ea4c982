"""Occupation-time profiles of random interlacements on Z^d: simulation and variational checks."""
__version__ = "0.1.0"
