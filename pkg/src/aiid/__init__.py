"""Robust information processing for almost i.i.d. sources and channels."""

__version__ = "0.1.0"
