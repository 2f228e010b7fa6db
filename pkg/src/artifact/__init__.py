"""Simulator-anchored experimentation laboratory for tabular MDPs."""

__version__ = "0.1.0"
