"""Supervised-learning toolkit for two-phase clinical classifier comparison."""

__version__ = "0.1.0"
