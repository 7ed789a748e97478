"""Subset lookup tables: every component subset of a prompt, rendered.

Entry order is ascending bitmask value, so an entry's position IS its mask and
mapping a classifier argmax to an included-component count is a popcount.
Bit i of a mask selects components[i] of the source prompt.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import IndexOutOfRange, SubsetExplosion
from .prompts import PromptSpec, render_prompt

DEFAULT_K_MAX = 8
EMPTY_SUBSET_TEXT = ""


@dataclass(frozen=True)
class LookupEntry:
    mask: int
    text: str
    cardinality: int


@dataclass(frozen=True)
class LookupTable:
    """All 2^k subset prompts of one source prompt, ascending by mask."""

    k: int
    entries: tuple[LookupEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def texts(self) -> list[str]:
        return [e.text for e in self.entries]

    def dump(self) -> str:
        """JSON debug dump of the full lattice."""
        return json.dumps(
            [{"mask": e.mask, "cardinality": e.cardinality, "text": e.text} for e in self.entries],
            indent=2,
            ensure_ascii=False,
        )


def build_lookup(
    prompt: PromptSpec,
    k_max: int = DEFAULT_K_MAX,
    empty_text: str = EMPTY_SUBSET_TEXT,
) -> LookupTable:
    """Enumerate all 2^k component subsets of the prompt as rendered entries.

    Subset text reuses the full prompt grammar with components kept in
    original prompt order; the empty subset renders as ``empty_text``
    (default: the empty string).
    """
    k = prompt.k
    if k > k_max:
        raise SubsetExplosion(k, k_max)
    entries = [LookupEntry(mask=0, text=empty_text, cardinality=0)]
    for mask in range(1, 1 << k):
        selected = [prompt.components[i] for i in range(k) if mask >> i & 1]
        entries.append(
            LookupEntry(
                mask=mask,
                text=render_prompt(selected, prompt.grammar),
                cardinality=mask.bit_count(),
            )
        )
    return LookupTable(k=k, entries=tuple(entries))


def count_components(table: LookupTable, entry_index: int) -> int:
    """Number of components in the subset at ``entry_index`` (its popcount)."""
    if not 0 <= entry_index < len(table.entries):
        raise IndexOutOfRange(
            f"entry index {entry_index} out of range for a {table.k}-component table "
            f"of {len(table.entries)} entries"
        )
    return table.entries[entry_index].cardinality


def mask_components(table: LookupTable, entry_index: int, prompt: PromptSpec) -> tuple[int, ...]:
    """Vocabulary label indices selected by the entry's mask."""
    if not 0 <= entry_index < len(table.entries):
        raise IndexOutOfRange(f"entry index {entry_index} out of range")
    mask = table.entries[entry_index].mask
    return tuple(prompt.components[i].index for i in range(prompt.k) if mask >> i & 1)
