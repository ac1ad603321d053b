"""Exact-diagonalization toolkit for local energy extraction on spin chains."""

__version__ = "0.1.0"
