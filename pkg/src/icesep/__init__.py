"""Separating subgroups of ICE groups by finite-index GICE subgroups."""

__version__ = "0.1.0"
