"""Desk-scale cross-language retrieval toolkit."""

__version__ = "0.1.0"
