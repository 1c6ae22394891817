"""Small-data deep hedging under proportional transaction costs."""

__version__ = "0.1.0"
