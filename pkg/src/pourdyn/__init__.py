"""Recurrent sequence regression of robot pouring dynamics."""

__version__ = "0.1.0"
