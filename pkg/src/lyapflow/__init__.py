"""Lyapunov certification and discovery for accelerated gradient flows."""

__version__ = "0.1.0"
