"""Inverse one-phase Stefan problems by front fixing and eigenfunction expansion."""
__version__ = "0.1.0"
