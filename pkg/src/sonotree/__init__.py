"""Hierarchical ultrasound feature extraction with retrieval-augmented gated fusion."""

__version__ = "0.1.0"
