"""Content-addressed embedding cache.

Keys combine the backend id with a digest of the canonical input (subset text
plus its label indices, or raw image bytes); values are single-row .npy
files. Writes go through a temp file and os.replace, so concurrent writers
of the same key are benign last-writer-wins races over identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from pathlib import Path

import numpy as np

from .contracts import ImageRef, SubsetText


def _safe_dir(backend_id: str) -> str:
    stem = re.sub(r"[^A-Za-z0-9._-]+", "_", backend_id)[:48]
    return f"{stem}-{hashlib.sha256(backend_id.encode('utf-8')).hexdigest()[:8]}"


class EmbeddingCache:
    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _path(self, backend_id: str, key: str) -> Path:
        return self.root / _safe_dir(backend_id) / f"{key}.npy"

    @staticmethod
    def _text_key(subset: SubsetText) -> str:
        canonical = json.dumps(
            {
                "text": subset.text,
                "labels": None if subset.label_indices is None else list(subset.label_indices),
            },
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    @staticmethod
    def _image_key(ref: ImageRef) -> str:
        with open(ref.path, "rb") as fh:
            return hashlib.sha256(fh.read()).hexdigest()

    def _get(self, backend_id: str, key: str) -> np.ndarray | None:
        path = self._path(backend_id, key)
        if not path.exists():
            return None
        try:
            return np.load(path, allow_pickle=False)
        except (OSError, ValueError):
            return None

    def _put(self, backend_id: str, key: str, row: np.ndarray) -> None:
        path = self._path(backend_id, key)
        path.parent.mkdir(parents=True, exist_ok=True)
        # np.save appends .npy when missing, so the temp name must keep it.
        tmp = path.with_name(f"{path.stem}.tmp{os.getpid()}.npy")
        np.save(tmp, row, allow_pickle=False)
        os.replace(tmp, path)

    def _embed(self, backend_id, items, keys, embed_fn) -> np.ndarray:
        rows: list[np.ndarray | None] = [self._get(backend_id, k) for k in keys]
        missing = [i for i, row in enumerate(rows) if row is None]
        if missing:
            computed = embed_fn([items[i] for i in missing])
            for slot, row in zip(missing, computed):
                rows[slot] = np.asarray(row)
                self._put(backend_id, keys[slot], rows[slot])
        return np.stack(rows)

    def embed_texts(self, backend, subsets: list[SubsetText]) -> np.ndarray:
        keys = [self._text_key(s) for s in subsets]
        return self._embed(backend.backend_id, subsets, keys, backend.embed_texts)

    def embed_images(self, backend, refs: list[ImageRef]) -> np.ndarray:
        """Cache image embeddings by file content. Only valid for backends
        whose output is a pure function of the pixels (the real backend); the
        mock derives embeddings from manifest ground truth instead."""
        keys = [self._image_key(r) for r in refs]
        return self._embed(backend.backend_id, refs, keys, backend.embed_images)
