"""Acoustic-to-articulatory inversion onto ultrasound tongue images."""

__version__ = "0.1.0"
