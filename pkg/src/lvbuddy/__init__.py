"""Buddying of low-voltage feeders from a monitored sample, with confidence bands and error metrics."""

__version__ = "0.1.0"
