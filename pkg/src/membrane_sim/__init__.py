"""Desk-scale simulator of chiral membrane electrodynamics and a membrane Kane register."""

__version__ = "0.1.0"
