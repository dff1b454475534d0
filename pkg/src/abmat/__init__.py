"""Adaptive background matting over dynamic background videos."""

__version__ = "0.1.0"
