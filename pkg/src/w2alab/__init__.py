"""Latent world-model-to-policy post-training on a deterministic toy world."""

__version__ = "0.1.0"
