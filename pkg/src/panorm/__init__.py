"""Loudspeaker normalization and optimal panning for 2D layouts."""

__version__ = "0.1.0"
