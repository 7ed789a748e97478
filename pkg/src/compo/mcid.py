"""Multi-component composite construction: near-square collages of one
source image per prompt component, with ground-truth manifests.

Layout search: for every candidate row count r, the K sources are split in
order into r rows as evenly as possible, every image is scaled to a common
row height, and the r whose canvas aspect |ln(W/H)| is smallest wins (ties to
fewer rows). Rows narrower than the canvas are right-padded with black.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

from PIL import Image

from .errors import ImageLoadError, InvalidParameter, InvalidSize, MissingClassImages
from .prompts import PromptSpec
from .rng import TAG_MCID_SOURCES, child_rng
from .vocabulary import Vocabulary

log = logging.getLogger(__name__)

DEFAULT_ROW_HEIGHT = 256


@dataclass(frozen=True)
class CorpusIndex:
    """Source-image pool: vocabulary label index to image paths."""

    root: str
    by_label: dict[int, tuple[str, ...]]

    def paths_for(self, label_index: int) -> tuple[str, ...]:
        return self.by_label.get(label_index, ())


@dataclass(frozen=True)
class Placement:
    source_index: int
    width: int
    height: int


@dataclass(frozen=True)
class Layout:
    """Chosen row partition with per-image scaled sizes and canvas dims."""

    rows: tuple[tuple[Placement, ...], ...]
    row_heights: tuple[int, ...]
    canvas_w: int
    canvas_h: int

    @property
    def row_count(self) -> int:
        return len(self.rows)


def load_corpus(
    root: str | Path, vocab: Vocabulary, class_map: str | Path | None = None
) -> CorpusIndex:
    """Index a corpus laid out as ``<root>/<class_dir>/<images>``.

    ``class_map`` is a JSON object mapping class_dir to vocabulary name; when
    omitted, directory names (underscores read as spaces) must match
    vocabulary names, and unmatched directories are skipped.
    """
    root = Path(root)
    if not root.is_dir():
        raise InvalidParameter(f"corpus root {root} is not a directory")
    mapping: dict[str, str] | None = None
    if class_map is not None:
        mapping = json.loads(Path(class_map).read_text(encoding="utf-8"))
    by_label: dict[int, tuple[str, ...]] = {}
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        if mapping is not None:
            name = mapping.get(sub.name)
            if name is None:
                log.debug("corpus directory %s not in class map, skipping", sub.name)
                continue
        else:
            name = sub.name.replace("_", " ")
        if name not in vocab:
            log.debug("corpus directory %s has no vocabulary label, skipping", sub.name)
            continue
        label = vocab.by_name(name)
        files = tuple(
            str(p) for p in sorted(sub.iterdir())
            if p.is_file() and p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp", ".webp")
        )
        if files:
            by_label[label.index] = files
    return CorpusIndex(root=str(root), by_label=by_label)


def _plan_for_rows(sizes, r: int, h: int):
    """Partition sizes in order into r rows and scale to row height h."""
    k = len(sizes)
    base, rem = divmod(k, r)
    rows = []
    cursor = 0
    for row_i in range(r):
        take = base + 1 if row_i < rem else base
        row = []
        for j in range(cursor, cursor + take):
            w, sh = sizes[j]
            row.append(Placement(source_index=j, width=max(1, round(h * w / sh)), height=h))
        rows.append(tuple(row))
        cursor += take
    width = max(sum(p.width for p in row) for row in rows)
    return tuple(rows), width, r * h


def plan_layout(source_sizes, target_row_height: int = DEFAULT_ROW_HEIGHT) -> Layout:
    """Pick the row count minimizing |ln(canvas_w / canvas_h)|, ties to fewer rows."""
    sizes = [(int(w), int(h)) for w, h in source_sizes]
    if not sizes:
        raise InvalidParameter("cannot plan a layout for zero sources")
    if target_row_height < 1:
        raise InvalidParameter(f"target_row_height must be >= 1, got {target_row_height}")
    for w, h in sizes:
        if w <= 0 or h <= 0:
            raise InvalidSize(f"source size {w}x{h} has a zero or negative dimension")
    best = None
    best_obj = None
    for r in range(1, len(sizes) + 1):
        rows, width, height = _plan_for_rows(sizes, r, target_row_height)
        obj = abs(math.log(width / height))
        if best_obj is None or obj < best_obj:
            best_obj = obj
            best = Layout(
                rows=rows,
                row_heights=tuple(target_row_height for _ in rows),
                canvas_w=width,
                canvas_h=height,
            )
    return best


def compose(sources, layout: Layout) -> Image.Image:
    """Paste the scaled sources onto a black canvas per the layout."""
    flat = {p.source_index for row in layout.rows for p in row}
    if flat != set(range(len(sources))):
        raise InvalidParameter("layout does not cover the given sources exactly once")
    canvas = Image.new("RGB", (layout.canvas_w, layout.canvas_h), (0, 0, 0))
    y = 0
    for row, row_h in zip(layout.rows, layout.row_heights):
        x = 0
        for placement in row:
            src = sources[placement.source_index]
            if src.mode != "RGB":
                src = src.convert("RGB")
            scaled = src.resize((placement.width, placement.height), Image.BILINEAR)
            canvas.paste(scaled, (x, y))
            x += placement.width
        y += row_h
    return canvas


def _decode(path: str) -> Image.Image:
    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except OSError as exc:
        raise ImageLoadError(path, str(exc)) from exc


def build_dataset(
    corpus: CorpusIndex,
    prompts: list[PromptSpec],
    images_per_prompt: int,
    seed: int,
    out_dir: str | Path,
    *,
    row_height: int = DEFAULT_ROW_HEIGHT,
) -> list[dict]:
    """Build composites plus a JSONL manifest; deterministic given the seed.

    Source picks are uniform per component with replacement across composites,
    drawn from a child RNG stream keyed by (prompt_id, image index). Fails
    before writing anything if any prompt component has no corpus images.
    """
    if images_per_prompt < 1:
        raise InvalidParameter(f"images_per_prompt must be >= 1, got {images_per_prompt}")
    for prompt in prompts:
        for comp in prompt.components:
            if not corpus.paths_for(comp.index):
                raise MissingClassImages(comp.name)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for prompt in sorted(prompts, key=lambda p: p.prompt_id):
        for image_id in range(images_per_prompt):
            rng = child_rng(seed, TAG_MCID_SOURCES, index=prompt.prompt_id, subindex=image_id)
            source_paths = []
            for comp in prompt.components:
                pool = corpus.paths_for(comp.index)
                source_paths.append(pool[int(rng.integers(len(pool)))])
            sources = [_decode(p) for p in source_paths]
            layout = plan_layout([im.size for im in sources], row_height)
            composite = compose(sources, layout)
            name = f"composite_{prompt.prompt_id:05d}_{image_id:03d}.png"
            composite.save(out_dir / name, format="PNG")
            entries.append(
                {
                    "composite_path": name,
                    "prompt_id": prompt.prompt_id,
                    "image_id": image_id,
                    "k": prompt.k,
                    "component_indices": list(prompt.component_indices),
                    "source_paths": source_paths,
                    "layout": {
                        "rows": layout.row_count,
                        "canvas_w": layout.canvas_w,
                        "canvas_h": layout.canvas_h,
                        "row_height": row_height,
                    },
                    "seed": seed,
                }
            )
    with open(out_dir / "manifest.jsonl", "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry, sort_keys=True, ensure_ascii=False) + "\n")
    return entries


def load_composite_manifest(path: str | Path) -> list[dict]:
    """Read a composite manifest; composite paths resolve against its directory."""
    path = Path(path)
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            obj["composite_path"] = str((path.parent / obj["composite_path"]).resolve())
            entries.append(obj)
    return entries
