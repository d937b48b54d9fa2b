"""Probability machinery and locality audits for the ideal EPRB experiment."""

__version__ = "0.1.0"
