"""Small shared helpers: ordered parallel mapping, hashing, canonical JSON."""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path


def default_jobs() -> int:
    return os.cpu_count() or 1


def parallel_map(fn, items, jobs: int = 1) -> list:
    """Map fn over items with a thread pool, results in input order.

    Workers must not share mutable state; ordered gathering keeps any
    downstream floating-point reduction deterministic regardless of
    scheduling.
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(
        json.dumps(obj, sort_keys=True, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
