"""Steady-state squeezing in closed, kicked, and driven-dissipative Rabi and Dicke models."""

__version__ = "0.1.0"
