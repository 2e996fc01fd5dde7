"""Grayscale-to-ViT classification pipeline with its own autodiff engine."""

__version__ = "0.1.0"
