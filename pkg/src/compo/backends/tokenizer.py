"""Byte-pair-encoding tokenizer compatible with published vocab.json and
merges.txt files (the text-encoder tokenizer format).

Text is whitespace-collapsed and lowercased, split into words (letter runs,
single numerics, contractions, symbol runs), mapped byte-by-byte into the
printable-unicode alphabet, then merged greedily by rank with an end-of-word
marker on each word's last symbol. Encoding wraps token ids in start/end
markers, truncates to the context length preserving the end token, and pads
with zeros.
"""

from __future__ import annotations

import functools
import html
import json
import logging
from pathlib import Path

import numpy as np

from ..errors import DataError

log = logging.getLogger(__name__)

SOT_TOKEN = "<|startoftext|>"
EOT_TOKEN = "<|endoftext|>"
END_OF_WORD = "</w>"
DEFAULT_CONTEXT_LENGTH = 77

_CONTRACTIONS = ("'s", "'t", "'re", "'ve", "'m", "'ll", "'d")


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


def _clean(text: str) -> str:
    text = html.unescape(html.unescape(text))
    return " ".join(text.split()).strip().lower()


def _split_words(text: str) -> list[str]:
    """Tokenize into the word units BPE merges operate on.

    Units: the special markers verbatim, common English contractions, letter
    runs, single numeric characters, and runs of other non-space symbols.
    """
    words = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        matched_special = False
        for special in (SOT_TOKEN, EOT_TOKEN):
            if text.startswith(special, i):
                words.append(special)
                i += len(special)
                matched_special = True
                break
        if matched_special:
            continue
        if ch == "'":
            lowered = text[i:].lower()
            contraction = next((c for c in _CONTRACTIONS if lowered.startswith(c)), None)
            if contraction is not None:
                words.append(text[i : i + len(contraction)])
                i += len(contraction)
                continue
        if ch.isalpha():
            j = i + 1
            while j < n and text[j].isalpha():
                j += 1
            words.append(text[i:j])
            i = j
            continue
        if ch.isnumeric():
            words.append(ch)
            i += 1
            continue
        j = i + 1
        while j < n and not (text[j].isspace() or text[j].isalpha() or text[j].isnumeric()):
            if text[j] == "'" or text.startswith(SOT_TOKEN, j) or text.startswith(EOT_TOKEN, j):
                break
            j += 1
        words.append(text[i:j])
        i = j
    return words


def _get_pairs(word: tuple[str, ...]) -> set[tuple[str, str]]:
    return set(zip(word, word[1:]))


class BpeTokenizer:
    def __init__(self, vocab: dict[str, int], merges: list[tuple[str, str]]):
        self.encoder = dict(vocab)
        for special in (SOT_TOKEN, EOT_TOKEN):
            if special not in self.encoder:
                raise DataError(f"tokenizer vocab is missing the {special} token")
        self.decoder = {v: k for k, v in self.encoder.items()}
        self.ranks = {pair: i for i, pair in enumerate(merges)}
        self.byte_encoder = bytes_to_unicode()
        self.byte_decoder = {v: k for k, v in self.byte_encoder.items()}
        self.sot_id = self.encoder[SOT_TOKEN]
        self.eot_id = self.encoder[EOT_TOKEN]
        self._cache: dict[str, list[str]] = {}

    @classmethod
    def from_files(cls, vocab_path: str | Path, merges_path: str | Path) -> "BpeTokenizer":
        vocab = json.loads(Path(vocab_path).read_text(encoding="utf-8"))
        merges = []
        for line in Path(merges_path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#version"):
                continue
            first, _, second = line.partition(" ")
            if not second:
                raise DataError(f"malformed merges line {line!r}")
            merges.append((first, second))
        return cls(vocab, merges)

    def _bpe(self, word_text: str) -> list[str]:
        cached = self._cache.get(word_text)
        if cached is not None:
            return cached
        symbols = [self.byte_encoder[b] for b in word_text.encode("utf-8")]
        if not symbols:
            return []
        word = tuple(symbols[:-1]) + (symbols[-1] + END_OF_WORD,)
        while len(word) > 1:
            pairs = _get_pairs(word)
            best = min(pairs, key=lambda p: self.ranks.get(p, float("inf")))
            if best not in self.ranks:
                break
            first, second = best
            merged = []
            i = 0
            while i < len(word):
                if i < len(word) - 1 and word[i] == first and word[i + 1] == second:
                    merged.append(first + second)
                    i += 2
                else:
                    merged.append(word[i])
                    i += 1
            word = tuple(merged)
        out = list(word)
        self._cache[word_text] = out
        return out

    def encode(self, text: str) -> list[int]:
        """BPE token ids for the cleaned text, without start/end markers."""
        ids = []
        for word in _split_words(_clean(text)):
            if word in (SOT_TOKEN, EOT_TOKEN):
                ids.append(self.encoder[word])
                continue
            for piece in self._bpe(word):
                try:
                    ids.append(self.encoder[piece])
                except KeyError:
                    raise DataError(
                        f"token piece {piece!r} from word {word!r} is not in the vocab"
                    ) from None
        return ids

    def encode_batch(
        self, texts: list[str], context_length: int = DEFAULT_CONTEXT_LENGTH
    ) -> tuple[np.ndarray, np.ndarray]:
        """Fixed-length id matrix plus each row's end-token position.

        Rows are [start, tokens..., end, 0...]; overlong rows are truncated
        with the end token kept in the last slot (logged, not an error).
        """
        tokens = np.zeros((len(texts), context_length), dtype=np.int64)
        eot_positions = np.zeros(len(texts), dtype=np.int64)
        for row, text in enumerate(texts):
            ids = [self.sot_id] + self.encode(text) + [self.eot_id]
            if len(ids) > context_length:
                log.warning(
                    "text of %d tokens truncated to context length %d: %.60r",
                    len(ids), context_length, text,
                )
                ids = ids[: context_length - 1] + [self.eot_id]
            tokens[row, : len(ids)] = ids
            eot_positions[row] = len(ids) - 1
        return tokens, eot_positions
