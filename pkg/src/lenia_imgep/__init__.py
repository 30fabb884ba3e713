"""Automated discovery of Lenia patterns with intrinsically motivated goal exploration."""

__version__ = "0.1.0"
