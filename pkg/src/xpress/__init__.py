"""Xpress: context-aware robot facial expressions, validated end to end."""

__version__ = "0.1.0"
