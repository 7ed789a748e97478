"""Deterministic child RNG streams.

All sampling in the package draws from Philox counter-based streams keyed by
(seed, stream index) with a domain tag in the counter block. Streams for
different indices or domains never overlap, so work can be parallelized by
index while staying bit-reproducible regardless of scheduling.
"""

import numpy as np

# Domain tags keep streams for different purposes disjoint even when they
# share (seed, index).
TAG_PROMPT_SAMPLE = 1
TAG_PROMPT_SHUFFLE = 2
TAG_MCID_SOURCES = 3
TAG_MOCK_IMAGE = 4
TAG_MOCK_CLASSIFIER = 5

_MASK64 = (1 << 64) - 1


def child_rng(seed: int, tag: int, index: int = 0, subindex: int = 0) -> np.random.Generator:
    """Return the Generator for stream (seed, tag, index, subindex)."""
    key = np.array([seed & _MASK64, index & _MASK64], dtype=np.uint64)
    counter = np.array([tag & _MASK64, subindex & _MASK64, 0, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))
