"""Negated-event commonsense knowledge toolkit."""

__version__ = "0.1.0"
