"""Deterministic mock backend: an exact oracle for pipeline tests.

Embeddings are indicator vectors over P+1 dimensions (one per vocabulary
label plus a reserved dimension for the empty subset), L2-normalized. With
zero noise the cosine between a query subset Q and a candidate subset V is
|Q∩V| / sqrt(|Q|·|V|), which is uniquely maximized at V=Q, so the argmax over
a lookup table recovers the planted component set exactly.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidParameter, MockResolutionError
from ..rng import TAG_MOCK_CLASSIFIER, TAG_MOCK_IMAGE, child_rng
from ..vocabulary import Vocabulary
from .contracts import ImageRef, SubsetText


@dataclass(frozen=True)
class MockWorldConfig:
    """Knobs for the simulated detector.

    ``detection_probs`` maps label index to the probability that a planted
    component survives into the image embedding (default 1.0); ``noise_level``
    adds Gaussian noise to image embeddings before re-normalization.
    """

    vocab: Vocabulary
    noise_level: float = 0.0
    detection_probs: dict[int, float] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.noise_level) or self.noise_level < 0:
            raise InvalidParameter(f"noise_level must be finite and >= 0, got {self.noise_level}")
        for idx, prob in self.detection_probs.items():
            if not 0 <= idx < self.vocab.size:
                raise InvalidParameter(f"detection_probs references unknown label index {idx}")
            if not 0.0 <= prob <= 1.0:
                raise InvalidParameter(f"detection probability for label {idx} is {prob}")


class MockEmbeddingBackend:
    """Indicator-vector embedder over the vocabulary plus an empty dimension."""

    def __init__(self, config: MockWorldConfig):
        self.config = config
        self.embed_dim = config.vocab.size + 1
        self.backend_id = f"mock:p{config.vocab.size}:s{config.seed}:n{config.noise_level:g}"

    def _indicator(self, indices: tuple[int, ...]) -> np.ndarray:
        vec = np.zeros(self.embed_dim, dtype=np.float64)
        if indices:
            for idx in indices:
                if not 0 <= idx < self.config.vocab.size:
                    raise MockResolutionError(f"label index {idx} not in vocabulary")
                vec[idx] = 1.0
        else:
            vec[self.embed_dim - 1] = 1.0
        return vec / np.linalg.norm(vec)

    def embed_texts(self, subsets: list[SubsetText]) -> np.ndarray:
        rows = np.empty((len(subsets), self.embed_dim), dtype=np.float64)
        for i, sub in enumerate(subsets):
            if sub.label_indices is None:
                raise MockResolutionError(
                    f"mock backend needs structured label indices, got bare text {sub.text!r}"
                )
            rows[i] = self._indicator(tuple(sub.label_indices))
        return rows

    def embed_images(self, images: list[ImageRef]) -> np.ndarray:
        rows = np.empty((len(images), self.embed_dim), dtype=np.float64)
        for i, ref in enumerate(images):
            if ref.planted is None:
                raise MockResolutionError(
                    f"mock backend needs planted labels for image "
                    f"({ref.prompt_id}, {ref.image_id})"
                )
            rng = child_rng(
                self.config.seed, TAG_MOCK_IMAGE, index=ref.prompt_id, subindex=ref.image_id
            )
            surviving = tuple(
                idx
                for idx in ref.planted
                if rng.random() < self.config.detection_probs.get(idx, 1.0)
            )
            vec = self._indicator(surviving)
            if self.config.noise_level > 0:
                vec = vec + self.config.noise_level * rng.standard_normal(self.embed_dim)
                vec = vec / np.linalg.norm(vec)
            rows[i] = vec
        return rows


class MockClassifierBackend:
    """Seeded pseudo-random classifier for exercising the IS/FID plumbing.

    Outputs are a pure function of (seed, image file bytes), so repeated runs
    over the same directory are bitwise identical.
    """

    def __init__(self, seed: int = 0, class_count: int = 16, feature_dim: int = 8):
        if class_count < 2 or feature_dim < 1:
            raise InvalidParameter("class_count must be >= 2 and feature_dim >= 1")
        self.seed = seed
        self.class_count = class_count
        self.feature_dim = feature_dim
        self.backend_id = f"mock-classifier:c{class_count}:d{feature_dim}:s{seed}"

    def _rng_for(self, ref: ImageRef) -> np.random.Generator:
        if ref.path is None:
            raise MockResolutionError(
                f"mock classifier needs an image path for ({ref.prompt_id}, {ref.image_id})"
            )
        digest = hashlib.sha256(open(ref.path, "rb").read()).digest()
        subindex = int.from_bytes(digest[:8], "little")
        return child_rng(self.seed, TAG_MOCK_CLASSIFIER, index=0, subindex=subindex)

    def class_probs(self, images: list[ImageRef]) -> np.ndarray:
        rows = np.empty((len(images), self.class_count), dtype=np.float64)
        for i, ref in enumerate(images):
            logits = self._rng_for(ref).standard_normal(self.class_count)
            exp = np.exp(logits - logits.max())
            rows[i] = exp / exp.sum()
        return rows

    def features(self, images: list[ImageRef]) -> np.ndarray:
        rows = np.empty((len(images), self.feature_dim), dtype=np.float64)
        for i, ref in enumerate(images):
            rng = self._rng_for(ref)
            rng.standard_normal(self.class_count)  # keep stream aligned with class_probs
            rows[i] = rng.standard_normal(self.feature_dim)
        return rows
