"""Concept discovery and attribute-feedback retrieval on planted corpora."""

__version__ = "0.1.0"
