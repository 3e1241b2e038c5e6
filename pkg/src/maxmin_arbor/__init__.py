"""Desk-scale toolkit for the max-min degree arborescence problem."""

__version__ = "0.1.0"
