"""Component label set loading and prompt-grammar article selection.

A vocabulary is an ordered set of object-class names (the components pool).
Two file formats are supported:

* ``plain-lines`` — UTF-8, one class name per line, ``#`` lines ignored.
  ImageNet-style synonym lists ("tench, Tinca tinca") are truncated at the
  first comma so prompts read naturally.
* ``id-tab-name`` — ``<source_id>\\t<name>`` per line.

Names are lowercased and whitespace-normalized at load; prompt rendering
controls capitalization.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DuplicateLabel, EmptyVocabulary, InvalidParameter, MalformedLine

_VOWELS = frozenset("aeiou")


@dataclass(frozen=True)
class ComponentLabel:
    """One vocabulary entry: zero-based index plus its normalized name."""

    index: int
    name: str
    source_id: str | None = None


@dataclass(frozen=True)
class Vocabulary:
    """Immutable ordered label set; lookup by index and by name are bijective."""

    labels: tuple[ComponentLabel, ...]
    _by_name: dict[str, ComponentLabel] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        if not self.labels:
            raise EmptyVocabulary("vocabulary has no labels")
        object.__setattr__(self, "_by_name", {lab.name: lab for lab in self.labels})

    @property
    def size(self) -> int:
        return len(self.labels)

    def by_index(self, index: int) -> ComponentLabel:
        if not 0 <= index < len(self.labels):
            raise InvalidParameter(f"label index {index} out of range 0..{len(self.labels) - 1}")
        return self.labels[index]

    def by_name(self, name: str) -> ComponentLabel:
        try:
            return self._by_name[_normalize(name)]
        except KeyError:
            raise InvalidParameter(f"unknown label {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return _normalize(name) in self._by_name

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def content_hash(self) -> str:
        """Stable hash of the normalized label sequence, for run manifests."""
        h = hashlib.sha256()
        for lab in self.labels:
            h.update(lab.name.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()


def _normalize(name: str) -> str:
    return " ".join(name.split()).lower()


def load_vocabulary(path: str | Path, format: str | None = None) -> Vocabulary:
    """Load a vocabulary file.

    ``format`` is ``"plain-lines"`` or ``"id-tab-name"``; when omitted it is
    inferred from the extension (``.tsv`` means id-tab-name, anything else
    plain-lines).

    Raises:
        EmptyVocabulary: no labels after filtering blank/comment lines.
        DuplicateLabel: two lines normalize to the same name.
        MalformedLine: id-tab-name line without a tab or with empty fields.
    """
    path = Path(path)
    if format is None:
        format = "id-tab-name" if path.suffix.lower() == ".tsv" else "plain-lines"
    if format not in ("plain-lines", "id-tab-name"):
        raise InvalidParameter(f"unknown vocabulary format {format!r}")

    labels: list[ComponentLabel] = []
    first_line: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or (format == "plain-lines" and line.startswith("#")):
                continue
            if format == "plain-lines":
                name = _normalize(line.split(",", 1)[0])
                source_id = None
            else:
                if "\t" not in line:
                    raise MalformedLine(line_no, raw.rstrip("\n"))
                source_id, _, rest = line.partition("\t")
                source_id = source_id.strip()
                name = _normalize(rest)
                if not source_id:
                    raise MalformedLine(line_no, raw.rstrip("\n"))
            if not name:
                raise MalformedLine(line_no, raw.rstrip("\n"))
            if name in first_line:
                raise DuplicateLabel(name, (first_line[name], line_no))
            first_line[name] = line_no
            labels.append(ComponentLabel(index=len(labels), name=name, source_id=source_id))

    if not labels:
        raise EmptyVocabulary(f"no labels found in {path}")
    return Vocabulary(labels=tuple(labels))


def article_for(name: str) -> str:
    """Return "an" when the first alphabetic character is a vowel letter, else "a".

    Purely orthographic; phonetic exceptions ("hour", "unicorn") are accepted
    as mis-articled.
    """
    for ch in name:
        if ch.isalpha():
            return "an" if ch.lower() in _VOWELS else "a"
    return "a"
