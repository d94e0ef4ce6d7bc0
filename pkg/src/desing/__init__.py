"""Desingularization of compact linear group actions by iterated blow-up."""

__version__ = "0.1.0"
