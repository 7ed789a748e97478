"""Generation of byte-pair-encoding tokenizer files (vocab.json, merges.txt).

The reduced test-scale vocabulary keeps the full byte-level alphabet (so any
text tokenizes without unknowns) plus a handful of merges over words that
appear in the golden-fixture prompts, exercising the merge path end to end.
The file formats are the published ones: a token-to-id JSON map, and a merges
list with a '#version' header line that loaders skip.
"""

from __future__ import annotations

import functools
import json
from pathlib import Path

SOT_TOKEN = "<|startoftext|>"
EOT_TOKEN = "<|endoftext|>"
END_OF_WORD = "</w>"

MERGES_HEADER = "#version: 0.2"

# Ordered merge ranks; each pair's elements are symbols already present
# (byte characters, end-of-word variants, or earlier merge results).
TEST_MERGES: tuple[tuple[str, str], ...] = (
    ("s", "o"),
    ("so", "c"),
    ("soc", "k</w>"),
    ("p", "h"),
    ("ph", "o"),
    ("pho", "t"),
    ("phot", "o</w>"),
    ("t", "h"),
    ("th", "e</w>"),
    ("a", "n"),
    ("an", "d</w>"),
    ("v", "a"),
    ("va", "s"),
    ("vas", "e</w>"),
    ("o", "f</w>"),
    ("l", "a"),
    ("i", "n"),
    ("e", "r"),
)


@functools.lru_cache(maxsize=1)
def bytes_to_unicode() -> dict[int, str]:
    """Invertible byte-to-printable-character map used by the BPE alphabet."""
    keep = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("\xa1"), ord("\xac") + 1))
        + list(range(ord("\xae"), ord("\xff") + 1))
    )
    mapped = keep[:]
    offset = 0
    for b in range(256):
        if b not in keep:
            keep.append(b)
            mapped.append(256 + offset)
            offset += 1
    return dict(zip(keep, (chr(c) for c in mapped)))


def build_test_vocab(
    merges: tuple[tuple[str, str], ...] = TEST_MERGES,
) -> tuple[dict[str, int], list[tuple[str, str]]]:
    """Token-to-id map plus the merge list, in published file order:
    byte symbols, end-of-word byte symbols, merge results, special markers."""
    alphabet = list(bytes_to_unicode().values())
    tokens = alphabet + [sym + END_OF_WORD for sym in alphabet]
    for first, second in merges:
        tokens.append(first + second)
    tokens += [SOT_TOKEN, EOT_TOKEN]
    vocab = {}
    for token in tokens:
        if token in vocab:
            raise ValueError(f"duplicate token {token!r} in generated vocab")
        vocab[token] = len(vocab)
    return vocab, list(merges)


def write_tokenizer_files(
    out_dir: Path,
    vocab: dict[str, int],
    merges: list[tuple[str, str]],
) -> None:
    vocab_path = out_dir / "vocab.json"
    vocab_path.write_text(
        json.dumps(vocab, ensure_ascii=False, indent=0, sort_keys=False) + "\n",
        encoding="utf-8",
    )
    lines = [MERGES_HEADER] + [f"{first} {second}" for first, second in merges]
    (out_dir / "merges.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
