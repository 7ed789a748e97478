import json
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compo.errors import DataError, InvalidParameter, KTooLarge
from compo.prompts import (
    DEFAULT_GRAMMAR,
    Grammar,
    PromptSpec,
    load_prompt_manifest,
    render_prompt,
    sample_prompts,
    shuffle_prompt,
    write_prompt_manifest,
)
from compo.vocabulary import ComponentLabel


def _labels(*names):
    return tuple(ComponentLabel(index=i, name=n) for i, n in enumerate(names))


def test_render_single():
    assert render_prompt(_labels("sock")) == "A photo of a sock"
    assert render_prompt(_labels("umbrella")) == "A photo of an umbrella"


def test_render_pair():
    labels = _labels("sock", "acoustic guitar")
    assert render_prompt(labels) == "A photo of a sock and an acoustic guitar"


def test_render_triple_oxford():
    labels = _labels("sock", "vase", "orange tabby")
    assert render_prompt(labels) == "A photo of a sock, a vase, and an orange tabby"


def test_render_triple_no_oxford():
    labels = _labels("sock", "vase", "orange tabby")
    text = render_prompt(labels, Grammar(oxford_comma=False))
    assert text == "A photo of a sock, a vase and an orange tabby"


def test_render_trailing_period():
    labels = _labels("sock", "vase")
    text = render_prompt(labels, Grammar(trailing_period=True))
    assert text == "A photo of a sock and a vase."


def test_render_four_components():
    labels = _labels("sock", "vase", "crab", "ostrich")
    assert render_prompt(labels) == "A photo of a sock, a vase, a crab, and an ostrich"


def test_render_empty_rejected():
    with pytest.raises(InvalidParameter):
        render_prompt(())


def test_render_order_sensitive():
    forward = render_prompt(_labels("sock", "vase"))
    backward = render_prompt(tuple(reversed(_labels("sock", "vase"))))
    assert forward != backward


def test_prompt_spec_validates_text():
    labels = _labels("sock", "vase")
    with pytest.raises(InvalidParameter):
        PromptSpec(prompt_id=0, k=2, components=labels, text="A photo of a dog")


def test_prompt_spec_rejects_duplicates():
    lab = ComponentLabel(index=3, name="sock")
    with pytest.raises(InvalidParameter):
        PromptSpec(
            prompt_id=0,
            k=2,
            components=(lab, lab),
            text=render_prompt((lab, lab)),
        )


def test_prompt_spec_rejects_k_mismatch():
    labels = _labels("sock", "vase")
    with pytest.raises(InvalidParameter):
        PromptSpec(prompt_id=0, k=3, components=labels, text=render_prompt(labels))


def test_sample_shapes_and_distinctness(vocab):
    prompts = sample_prompts(vocab, k=3, m=25, seed=7)
    assert [p.prompt_id for p in prompts] == list(range(25))
    for p in prompts:
        assert p.k == 3
        assert len(set(p.component_indices)) == 3
        assert p.text == render_prompt(p.components)


def test_sample_deterministic(vocab):
    a = sample_prompts(vocab, k=4, m=10, seed=123)
    b = sample_prompts(vocab, k=4, m=10, seed=123)
    assert a == b


def test_sample_seed_sensitivity(vocab):
    a = sample_prompts(vocab, k=4, m=10, seed=1)
    b = sample_prompts(vocab, k=4, m=10, seed=2)
    assert any(x.component_indices != y.component_indices for x, y in zip(a, b))


def test_sample_prefix_stability(vocab):
    # Growing m must not disturb earlier prompts: stream j is keyed by j alone.
    short = sample_prompts(vocab, k=3, m=5, seed=99)
    long = sample_prompts(vocab, k=3, m=20, seed=99)
    assert long[:5] == short


def test_sample_k_bounds(vocab):
    with pytest.raises(KTooLarge):
        sample_prompts(vocab, k=len(vocab) + 1, m=1, seed=0)
    with pytest.raises(InvalidParameter):
        sample_prompts(vocab, k=0, m=1, seed=0)
    with pytest.raises(InvalidParameter):
        sample_prompts(vocab, k=1, m=0, seed=0)


def test_sample_k_equals_vocab_size(vocab):
    prompts = sample_prompts(vocab, k=len(vocab), m=3, seed=0)
    for p in prompts:
        assert sorted(p.component_indices) == list(range(len(vocab)))


def test_shuffle_preserves_multiset(vocab):
    prompts = sample_prompts(vocab, k=5, m=20, seed=11)
    for p in prompts:
        q = shuffle_prompt(p, seed=42)
        assert q.prompt_id == p.prompt_id
        assert Counter(q.component_indices) == Counter(p.component_indices)
        assert q.text == render_prompt(q.components)


def test_shuffle_deterministic(vocab):
    prompts = sample_prompts(vocab, k=6, m=5, seed=3)
    once = [shuffle_prompt(p, seed=9) for p in prompts]
    twice = [shuffle_prompt(p, seed=9) for p in prompts]
    assert once == twice


def test_shuffle_changes_some_order(vocab):
    prompts = sample_prompts(vocab, k=8, m=30, seed=5)
    shuffled = [shuffle_prompt(p, seed=17) for p in prompts]
    assert any(q.component_indices != p.component_indices for p, q in zip(prompts, shuffled))


def test_manifest_round_trip(tmp_path, vocab):
    prompts = sample_prompts(vocab, k=3, m=12, seed=21)
    path = tmp_path / "prompts.jsonl"
    write_prompt_manifest(prompts, path, seed=21)
    loaded = load_prompt_manifest(path, vocab)
    assert loaded == prompts


def test_manifest_is_sorted_json(tmp_path, vocab):
    prompts = sample_prompts(vocab, k=2, m=2, seed=0)
    path = tmp_path / "prompts.jsonl"
    write_prompt_manifest(prompts, path, seed=0)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 2
    obj = json.loads(lines[0])
    assert list(obj) == sorted(obj)
    assert obj["seed"] == 0


def test_manifest_byte_identical(tmp_path, vocab):
    prompts = sample_prompts(vocab, k=3, m=8, seed=4)
    p1 = tmp_path / "a.jsonl"
    p2 = tmp_path / "b.jsonl"
    write_prompt_manifest(prompts, p1, seed=4)
    write_prompt_manifest(prompts, p2, seed=4)
    assert p1.read_bytes() == p2.read_bytes()


def test_manifest_detects_name_drift(tmp_path, vocab):
    prompts = sample_prompts(vocab, k=2, m=1, seed=8)
    path = tmp_path / "prompts.jsonl"
    write_prompt_manifest(prompts, path, seed=8)
    obj = json.loads(path.read_text(encoding="utf-8"))
    obj["component_names"][0] = "submarine"
    path.write_text(json.dumps(obj) + "\n", encoding="utf-8")
    with pytest.raises(DataError):
        load_prompt_manifest(path, vocab)


def test_manifest_detects_text_drift(tmp_path, vocab):
    prompts = sample_prompts(vocab, k=2, m=1, seed=8)
    path = tmp_path / "prompts.jsonl"
    write_prompt_manifest(prompts, path, seed=8)
    obj = json.loads(path.read_text(encoding="utf-8"))
    obj["text"] = obj["text"].replace("A photo of", "An image of")
    path.write_text(json.dumps(obj) + "\n", encoding="utf-8")
    with pytest.raises(DataError):
        load_prompt_manifest(path, vocab)


def test_manifest_grammar_mismatch(tmp_path, vocab):
    prompts = sample_prompts(vocab, k=3, m=1, seed=8, grammar=Grammar(trailing_period=True))
    path = tmp_path / "prompts.jsonl"
    write_prompt_manifest(prompts, path, seed=8)
    with pytest.raises(DataError):
        load_prompt_manifest(path, vocab, DEFAULT_GRAMMAR)


@settings(max_examples=50)
@given(
    names=st.lists(
        st.text(alphabet="abcdefghijklmnopqrstuvwxyz", min_size=1, max_size=8),
        min_size=1,
        max_size=6,
        unique=True,
    ),
    oxford=st.booleans(),
    period=st.booleans(),
)
def test_render_structure_property(names, oxford, period):
    labels = _labels(*names)
    grammar = Grammar(oxford_comma=oxford, trailing_period=period)
    text = render_prompt(labels, grammar)
    assert text.startswith("A photo of ")
    assert text.endswith(".") == period
    body = text[len("A photo of ") :].rstrip(".")
    # Every component appears with its article; " and " separates the last.
    for lab in labels:
        assert lab.name in body
    if len(labels) >= 2:
        assert " and " in body
    assert body.count(",") == (max(len(labels) - 2, 0) + (1 if oxford and len(labels) > 2 else 0))
