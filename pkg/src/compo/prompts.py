"""Multi-component prompt sampling, rendering, and shuffling.

Prompts are rendered with a fixed grammar: the prefix "A photo of", one
article per component, " and " before the final component, and a
comma-separated list for three or more components. The Oxford comma is on by
default and the trailing period off; both are configurable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError, InvalidParameter, KTooLarge
from .rng import TAG_PROMPT_SAMPLE, TAG_PROMPT_SHUFFLE, child_rng
from .vocabulary import ComponentLabel, Vocabulary, article_for

PROMPT_PREFIX = "A photo of"


@dataclass(frozen=True)
class Grammar:
    """Rendering switches for the prompt grammar."""

    oxford_comma: bool = True
    trailing_period: bool = False


DEFAULT_GRAMMAR = Grammar()


@dataclass(frozen=True)
class PromptSpec:
    """An ordered set of k distinct components plus its rendered text."""

    prompt_id: int
    k: int
    components: tuple[ComponentLabel, ...]
    text: str
    grammar: Grammar = DEFAULT_GRAMMAR

    def __post_init__(self):
        if self.k != len(self.components):
            raise InvalidParameter(
                f"prompt {self.prompt_id}: k={self.k} but {len(self.components)} components"
            )
        indices = [c.index for c in self.components]
        if len(set(indices)) != len(indices):
            raise InvalidParameter(f"prompt {self.prompt_id}: duplicate components {indices}")
        expected = render_prompt(self.components, self.grammar)
        if self.text != expected:
            raise InvalidParameter(
                f"prompt {self.prompt_id}: text {self.text!r} does not match rendering {expected!r}"
            )

    @property
    def component_indices(self) -> tuple[int, ...]:
        return tuple(c.index for c in self.components)


def render_prompt(components, grammar: Grammar = DEFAULT_GRAMMAR) -> str:
    """Render component labels into a prompt string.

    One component: "A photo of a sock". Two: "A photo of a sock and a vase".
    Three or more: comma-separated with "and" before the last item.
    """
    components = tuple(components)
    if not components:
        raise InvalidParameter("cannot render a prompt with no components")
    phrases = [f"{article_for(c.name)} {c.name}" for c in components]
    if len(phrases) == 1:
        body = phrases[0]
    elif len(phrases) == 2:
        body = f"{phrases[0]} and {phrases[1]}"
    else:
        head = ", ".join(phrases[:-1])
        comma = "," if grammar.oxford_comma else ""
        body = f"{head}{comma} and {phrases[-1]}"
    text = f"{PROMPT_PREFIX} {body}"
    if grammar.trailing_period:
        text += "."
    return text


def sample_prompts(
    vocab: Vocabulary,
    k: int,
    m: int,
    seed: int,
    grammar: Grammar = DEFAULT_GRAMMAR,
) -> list[PromptSpec]:
    """Sample m prompts of k distinct components each.

    Prompt j draws from its own child RNG stream keyed by (seed, j), so the
    result is independent of iteration order and stable across runs.
    """
    if k < 1:
        raise InvalidParameter(f"k must be >= 1, got {k}")
    if m < 1:
        raise InvalidParameter(f"m must be >= 1, got {m}")
    if k > vocab.size:
        raise KTooLarge(k, vocab.size)
    prompts = []
    for j in range(m):
        rng = child_rng(seed, TAG_PROMPT_SAMPLE, index=j)
        picks = rng.choice(vocab.size, size=k, replace=False)
        components = tuple(vocab.by_index(int(i)) for i in picks)
        prompts.append(
            PromptSpec(
                prompt_id=j,
                k=k,
                components=components,
                text=render_prompt(components, grammar),
                grammar=grammar,
            )
        )
    return prompts


def shuffle_prompt(prompt: PromptSpec, seed: int) -> PromptSpec:
    """Return the prompt with components uniformly permuted and text re-rendered.

    Deterministic given (prompt_id, seed); the component multiset is preserved.
    """
    rng = child_rng(seed, TAG_PROMPT_SHUFFLE, index=prompt.prompt_id)
    perm = rng.permutation(prompt.k)
    components = tuple(prompt.components[int(i)] for i in perm)
    return PromptSpec(
        prompt_id=prompt.prompt_id,
        k=prompt.k,
        components=components,
        text=render_prompt(components, prompt.grammar),
        grammar=prompt.grammar,
    )


def write_prompt_manifest(prompts: list[PromptSpec], path: str | Path, seed: int) -> None:
    """Write prompts as JSON-lines, one object per prompt, stable key order."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for p in prompts:
            fh.write(
                json.dumps(
                    {
                        "prompt_id": p.prompt_id,
                        "k": p.k,
                        "component_indices": list(p.component_indices),
                        "component_names": [c.name for c in p.components],
                        "text": p.text,
                        "seed": seed,
                    },
                    sort_keys=True,
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_prompt_manifest(
    path: str | Path,
    vocab: Vocabulary,
    grammar: Grammar = DEFAULT_GRAMMAR,
) -> list[PromptSpec]:
    """Load a prompt manifest and re-validate it against the vocabulary.

    Component names and the stored text are cross-checked against the
    vocabulary and the renderer; any drift raises DataError.
    """
    prompts = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            components = []
            for idx, name in zip(obj["component_indices"], obj["component_names"]):
                label = vocab.by_index(int(idx))
                if label.name != name:
                    raise DataError(
                        f"{path}:{line_no}: label {idx} is {label.name!r} in the "
                        f"vocabulary but {name!r} in the manifest"
                    )
                components.append(label)
            components = tuple(components)
            text = render_prompt(components, grammar)
            if text != obj["text"]:
                raise DataError(
                    f"{path}:{line_no}: stored text {obj['text']!r} does not match "
                    f"rendering {text!r}; check grammar flags"
                )
            prompts.append(
                PromptSpec(
                    prompt_id=int(obj["prompt_id"]),
                    k=int(obj["k"]),
                    components=components,
                    text=text,
                    grammar=grammar,
                )
            )
    return prompts
