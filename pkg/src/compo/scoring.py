"""Subset classification and the components-inclusion score.

Per image: softmax over scaled cosine similarities against every lookup-table
entry; the argmax entry's popcount over the prompt size k is the per-image
score s. The aggregate over all n*m (prompt, image) pairs is CIS_k.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backends.contracts import ImageRef, SubsetText
from .errors import (
    DimensionMismatch,
    ImageLoadError,
    IncompleteRun,
    KMismatch,
    NumericalError,
)
from .lookup import LookupTable, build_lookup, count_components
from .prompts import PromptSpec
from .util import parallel_map

log = logging.getLogger(__name__)

DEFAULT_SCALE = 100.0


@dataclass(frozen=True)
class ScoreRecord:
    """Outcome of classifying one image against its prompt's subset table."""

    prompt_id: int
    image_id: int
    image_path: str | None
    argmax_entry: int
    matched_count: int
    s: float


@dataclass(frozen=True)
class CisResult:
    """Aggregated score plus per-component inclusion/detection tallies."""

    k: int
    m: int
    n: int
    cis: float
    per_component_included: dict[int, int]
    per_component_detected: dict[int, int]
    record_count: int


def classify_subsets(
    image_embedding: np.ndarray,
    subset_text_embeddings: np.ndarray,
    scale: float = DEFAULT_SCALE,
) -> tuple[np.ndarray, int]:
    """Softmax over scaled cosines; returns (probabilities, argmax entry).

    Ties at the maximum similarity break toward the lowest entry index. The
    argmax (hence the score downstream) is invariant to the positive scale;
    only the reported probabilities depend on it.
    """
    image_embedding = np.asarray(image_embedding, dtype=np.float64)
    subset_text_embeddings = np.asarray(subset_text_embeddings, dtype=np.float64)
    if scale <= 0 or not np.isfinite(scale):
        raise NumericalError(f"softmax scale must be positive and finite, got {scale}")
    if not np.all(np.isfinite(image_embedding)) or not np.all(np.isfinite(subset_text_embeddings)):
        raise NumericalError("non-finite values in embeddings")
    if image_embedding.ndim != 1 or subset_text_embeddings.ndim != 2:
        raise DimensionMismatch(
            f"expected a vector and a matrix, got shapes {image_embedding.shape} "
            f"and {subset_text_embeddings.shape}"
        )
    if subset_text_embeddings.shape[1] != image_embedding.shape[0]:
        raise DimensionMismatch(
            f"embedding dim {image_embedding.shape[0]} does not match text matrix "
            f"width {subset_text_embeddings.shape[1]}"
        )
    sims = subset_text_embeddings @ image_embedding
    logits = scale * sims
    exp = np.exp(logits - logits.max())
    probs = exp / exp.sum()
    return probs, int(np.argmax(sims))


def score_image(prompt: PromptSpec, table: LookupTable, argmax_entry: int, *,
                image_id: int = 0, image_path: str | None = None) -> ScoreRecord:
    """Turn the chosen subset entry into the per-image score s = matched/k."""
    if table.k != prompt.k:
        raise KMismatch(f"table k={table.k} but prompt k={prompt.k}")
    matched = count_components(table, argmax_entry)
    return ScoreRecord(
        prompt_id=prompt.prompt_id,
        image_id=image_id,
        image_path=image_path,
        argmax_entry=argmax_entry,
        matched_count=matched,
        s=matched / prompt.k,
    )


def aggregate_cis(
    records: list[ScoreRecord],
    prompts: list[PromptSpec],
    k: int,
    m: int,
    n: int,
    *,
    allow_partial: bool = False,
) -> CisResult:
    """Aggregate per-image scores into CIS_k with per-component tallies.

    Summation runs per prompt first (records in image order), then across
    prompts in ascending prompt_id, so the floating-point result never
    depends on scheduling. ``allow_partial`` averages over present records
    instead of requiring the full n*m grid.
    """
    by_prompt_id = {p.prompt_id: p for p in prompts}
    grouped: dict[int, list[ScoreRecord]] = {}
    for rec in records:
        if rec.prompt_id not in by_prompt_id:
            raise IncompleteRun([(rec.prompt_id, rec.image_id)])
        grouped.setdefault(rec.prompt_id, []).append(rec)

    if not allow_partial:
        missing = []
        for p in prompts:
            seen = {r.image_id for r in grouped.get(p.prompt_id, [])}
            missing.extend((p.prompt_id, i) for i in range(n) if i not in seen)
        if missing or len(records) != n * m:
            raise IncompleteRun(missing)

    included: dict[int, int] = {}
    detected: dict[int, int] = {}
    total = 0.0
    count = 0
    for pid in sorted(grouped):
        prompt = by_prompt_id[pid]
        chunk = sorted(grouped[pid], key=lambda r: r.image_id)
        total += sum(r.s for r in chunk)
        count += len(chunk)
        for rec in chunk:
            mask = rec.argmax_entry
            for i, comp in enumerate(prompt.components):
                included[comp.index] = included.get(comp.index, 0) + 1
                if mask >> i & 1:
                    detected[comp.index] = detected.get(comp.index, 0) + 1
    if count == 0:
        raise IncompleteRun([(p.prompt_id, 0) for p in prompts])
    return CisResult(
        k=k,
        m=m,
        n=n,
        cis=total / count,
        per_component_included=included,
        per_component_detected=detected,
        record_count=count,
    )


def evaluate(
    prompts: list[PromptSpec],
    image_source: dict[int, list[ImageRef]],
    backend,
    scale: float = DEFAULT_SCALE,
    *,
    k_max: int = 8,
    empty_text: str = "",
    skip_broken: bool = False,
    text_cache=None,
    jobs: int = 1,
) -> tuple[CisResult, list[ScoreRecord]]:
    """Run the full pipeline: lookup tables, embeddings, argmax, aggregation.

    ``image_source`` maps prompt_id to that prompt's images; every prompt must
    have the same image count unless ``skip_broken`` excuses load failures
    (excluded pairs are logged and the mean runs over present records).
    Prompts are processed independently across ``jobs`` workers; records are
    gathered in prompt order, so results never depend on scheduling.
    """
    if not prompts:
        raise IncompleteRun([])
    k = prompts[0].k
    counts = {len(image_source.get(p.prompt_id, [])) for p in prompts}
    n = max(counts)
    if not skip_broken and len(counts) != 1:
        missing = []
        for p in prompts:
            have = len(image_source.get(p.prompt_id, []))
            missing.extend((p.prompt_id, i) for i in range(have, n))
        raise IncompleteRun(missing)

    def score_prompt(prompt: PromptSpec) -> tuple[list[ScoreRecord], int]:
        table = build_lookup(prompt, k_max=k_max, empty_text=empty_text)
        subsets = [
            SubsetText(
                text=entry.text,
                label_indices=tuple(
                    prompt.components[i].index for i in range(k) if entry.mask >> i & 1
                ),
            )
            for entry in table.entries
        ]
        if text_cache is not None:
            text_matrix = text_cache.embed_texts(backend, subsets)
        else:
            text_matrix = backend.embed_texts(subsets)
        refs = image_source.get(prompt.prompt_id, [])
        dropped = 0
        if skip_broken:
            rows = []
            kept = []
            for ref in refs:
                try:
                    rows.append(backend.embed_images([ref])[0])
                    kept.append(ref)
                except ImageLoadError:
                    dropped += 1
                    log.warning(
                        "skipping unreadable image (%s, %s): %s",
                        prompt.prompt_id, ref.image_id, ref.path,
                    )
            image_matrix = np.asarray(rows)
            refs = kept
        else:
            image_matrix = backend.embed_images(refs)
        chunk = []
        for row, ref in zip(image_matrix, refs):
            _, argmax_entry = classify_subsets(row, text_matrix, scale)
            chunk.append(
                score_image(
                    prompt, table, argmax_entry, image_id=ref.image_id, image_path=ref.path
                )
            )
        return chunk, dropped

    ordered = sorted(prompts, key=lambda p: p.prompt_id)
    results = parallel_map(score_prompt, ordered, jobs=jobs)
    records = [rec for chunk, _ in results for rec in chunk]
    dropped = sum(d for _, d in results)
    if dropped:
        log.warning("excluded %d unreadable images; CIS averages over present records", dropped)
    result = aggregate_cis(
        records, prompts, k=k, m=len(prompts), n=n, allow_partial=skip_broken
    )
    return result, records


def write_records(records: list[ScoreRecord], path: str | Path) -> None:
    """Per-record JSONL: the input consumed by the analysis tooling."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {
                        "prompt_id": r.prompt_id,
                        "image_id": r.image_id,
                        "image_path": r.image_path,
                        "argmax_mask": r.argmax_entry,
                        "matched_count": r.matched_count,
                        "s": r.s,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def load_records(path: str | Path) -> list[ScoreRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            records.append(
                ScoreRecord(
                    prompt_id=int(obj["prompt_id"]),
                    image_id=int(obj["image_id"]),
                    image_path=obj.get("image_path"),
                    argmax_entry=int(obj["argmax_mask"]),
                    matched_count=int(obj["matched_count"]),
                    s=float(obj["s"]),
                )
            )
    return records
