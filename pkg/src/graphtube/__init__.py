"""Diffusions confined to thin tubes around embedded graphs, their graph limits, and the checks that relate them."""

__version__ = "0.1.0"
