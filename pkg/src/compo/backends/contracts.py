"""Backend contracts shared by the mock oracle and the real model backend.

The scoring engine hands backends structured inputs: a SubsetText carries both
the rendered text and the label indices it was rendered from, and an ImageRef
carries the image path plus any ground-truth planted labels from the dataset
manifest. Real backends read the text and pixels; the mock oracle reads the
structure, so its answers are exact rather than parsed back out of prose.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np


@dataclass(frozen=True)
class SubsetText:
    """One lookup-table entry as backend input."""

    text: str
    label_indices: tuple[int, ...] | None = None


@dataclass(frozen=True)
class ImageRef:
    """One image as backend input; ``planted`` lists ground-truth label indices."""

    prompt_id: int
    image_id: int
    path: str | None = None
    planted: tuple[int, ...] | None = None


@runtime_checkable
class EmbeddingBackend(Protocol):
    """Image/text embedding pair used for subset classification.

    Implementations must be deterministic (same input, same output), return
    unit-norm rows within 1e-4, and accept the empty string as text.
    """

    backend_id: str
    embed_dim: int

    def embed_texts(self, subsets: list[SubsetText]) -> np.ndarray: ...

    def embed_images(self, images: list[ImageRef]) -> np.ndarray: ...


@runtime_checkable
class ClassifierBackend(Protocol):
    """Class-probability and feature extractor feeding IS and FID."""

    backend_id: str
    class_count: int
    feature_dim: int

    def class_probs(self, images: list[ImageRef]) -> np.ndarray: ...

    def features(self, images: list[ImageRef]) -> np.ndarray: ...
