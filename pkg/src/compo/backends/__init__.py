"""Scoring and classifier backends: deterministic mock oracle plus the
graph-executing real backend, with shared contracts and an embedding cache."""

from .contracts import (
    ClassifierBackend,
    EmbeddingBackend,
    ImageRef,
    SubsetText,
)
from .mock import MockClassifierBackend, MockEmbeddingBackend, MockWorldConfig

__all__ = [
    "ClassifierBackend",
    "EmbeddingBackend",
    "ImageRef",
    "SubsetText",
    "MockClassifierBackend",
    "MockEmbeddingBackend",
    "MockWorldConfig",
]
