import json
import logging

import numpy as np
import pytest

from compo.backends.tokenizer import (
    DEFAULT_CONTEXT_LENGTH,
    EOT_TOKEN,
    SOT_TOKEN,
    BpeTokenizer,
    _clean,
    _split_words,
    bytes_to_unicode,
)
from compo.errors import DataError


def tiny_tokenizer(extra_merges=()):
    """Hand-checkable vocab: full byte alphabet plus a few known merges."""
    alphabet = sorted(set(bytes_to_unicode().values()))
    vocab = {}
    for ch in alphabet:
        vocab[ch] = len(vocab)
    for ch in alphabet:
        vocab[ch + "</w>"] = len(vocab)
    merges = [("s", "o"), ("so", "c"), ("soc", "k</w>"), ("l", "o"), ("o", "w")]
    merges += list(extra_merges)
    for first, second in merges:
        token = first + second
        if token not in vocab:
            vocab[token] = len(vocab)
    vocab[SOT_TOKEN] = len(vocab)
    vocab[EOT_TOKEN] = len(vocab)
    return BpeTokenizer(vocab, merges), vocab


def test_bytes_to_unicode_bijection():
    table = bytes_to_unicode()
    assert len(table) == 256
    assert len(set(table.values())) == 256
    assert table[ord("a")] == "a"
    assert table[ord("!")] == "!"
    # Whitespace and control bytes are remapped out of the ASCII range.
    assert ord(table[ord(" ")]) >= 256
    assert ord(table[0]) >= 256


def test_clean_unescapes_twice_and_normalizes():
    assert _clean("Hello&amp;amp;World") == "hello&world"
    assert _clean("  A   Photo\tof\na SOCK ") == "a photo of a sock"
    assert _clean("") == ""


def test_split_words_basic():
    assert _split_words("a photo of a sock") == ["a", "photo", "of", "a", "sock"]


def test_split_words_contractions_and_digits():
    assert _split_words("it's 42 degrees!!") == ["it", "'s", "4", "2", "degrees", "!!"]
    assert _split_words("we'll don't i'm") == ["we", "'ll", "don", "'t", "i", "'m"]


def test_split_words_bare_apostrophe():
    assert _split_words("'x") == ["'", "x"]


def test_split_words_specials_verbatim():
    text = f"{SOT_TOKEN}hi{EOT_TOKEN}"
    assert _split_words(text) == [SOT_TOKEN, "hi", EOT_TOKEN]
    assert _split_words(f"!!{EOT_TOKEN}") == ["!!", EOT_TOKEN]


def test_split_words_punctuation_runs():
    assert _split_words("sock, vase.") == ["sock", ",", "vase", "."]
    assert _split_words("a--b") == ["a", "--", "b"]


def test_bpe_merges_by_rank():
    tok, vocab = tiny_tokenizer()
    # s+o, so+c, soc+k</w> all fire in rank order.
    assert tok.encode("sock") == [vocab["sock</w>"]]


def test_bpe_end_of_word_marker_blocks_merges():
    tok, vocab = tiny_tokenizer()
    # In "low" the w carries </w>, so the (o, w) merge cannot apply.
    assert tok.encode("low") == [vocab["lo"], vocab["w</w>"]]
    # In "lows" the w is word-internal and (o, w) applies after (l, o)...
    # but merging l+o first produces ("lo", "w", "s</w>") where (o, w) no
    # longer exists as a pair, so the result stays lo / w / s</w>.
    assert tok.encode("lows") == [vocab["lo"], vocab["w"], vocab["s</w>"]]


def test_encode_unmerged_word_falls_back_to_bytes():
    tok, vocab = tiny_tokenizer()
    assert tok.encode("vase") == [vocab["v"], vocab["a"], vocab["s"], vocab["e</w>"]]


def test_encode_lowercases_and_cleans():
    tok, _ = tiny_tokenizer()
    assert tok.encode("SOCK") == tok.encode("sock")
    assert tok.encode("  sock \n") == tok.encode("sock")


def test_encode_empty_string():
    tok, _ = tiny_tokenizer()
    assert tok.encode("") == []


def test_encode_specials_inline():
    tok, vocab = tiny_tokenizer()
    ids = tok.encode(f"{EOT_TOKEN} sock")
    assert ids[0] == vocab[EOT_TOKEN]


def test_encode_non_ascii_goes_through_bytes():
    tok, _ = tiny_tokenizer()
    ids = tok.encode("café")
    assert all(isinstance(i, int) for i in ids)
    assert len(ids) == 5  # c, a, f, plus two utf-8 bytes for é


def test_missing_special_token_rejected():
    with pytest.raises(DataError):
        BpeTokenizer({"a": 0}, [])


def test_unknown_piece_rejected():
    alphabet = sorted(set(bytes_to_unicode().values()))
    vocab = {ch: i for i, ch in enumerate(alphabet)}  # no </w> forms at all
    vocab[SOT_TOKEN] = len(vocab)
    vocab[EOT_TOKEN] = len(vocab)
    tok = BpeTokenizer(vocab, [])
    with pytest.raises(DataError):
        tok.encode("a")


def test_from_files_round_trip(tmp_path):
    tok_direct, vocab = tiny_tokenizer()
    vocab_path = tmp_path / "vocab.json"
    merges_path = tmp_path / "merges.txt"
    vocab_path.write_text(json.dumps(vocab), encoding="utf-8")
    merges_path.write_text(
        "#version: 0.2\ns o\nso c\nsoc k</w>\nl o\no w\n", encoding="utf-8"
    )
    tok = BpeTokenizer.from_files(vocab_path, merges_path)
    for text in ("sock", "low", "lows", "a photo of a sock"):
        assert tok.encode(text) == tok_direct.encode(text)


def test_from_files_rejects_malformed_merge(tmp_path):
    vocab_path = tmp_path / "vocab.json"
    merges_path = tmp_path / "merges.txt"
    _, vocab = tiny_tokenizer()
    vocab_path.write_text(json.dumps(vocab), encoding="utf-8")
    merges_path.write_text("s o\nbroken\n", encoding="utf-8")
    with pytest.raises(DataError):
        BpeTokenizer.from_files(vocab_path, merges_path)


def test_encode_batch_layout():
    tok, vocab = tiny_tokenizer()
    tokens, eot = tok.encode_batch(["sock", ""], context_length=8)
    assert tokens.shape == (2, 8)
    assert tokens.dtype == np.int64
    assert tokens[0, 0] == tok.sot_id
    assert tokens[0, 1] == vocab["sock</w>"]
    assert tokens[0, 2] == tok.eot_id
    assert tokens[0, 3:].sum() == 0
    assert eot[0] == 2
    # Empty text is just the marker pair.
    assert tokens[1, 0] == tok.sot_id
    assert tokens[1, 1] == tok.eot_id
    assert eot[1] == 1


def test_encode_batch_truncates_preserving_eot(caplog):
    tok, _ = tiny_tokenizer()
    with caplog.at_level(logging.WARNING, logger="compo.backends.tokenizer"):
        tokens, eot = tok.encode_batch(["vase " * 40], context_length=16)
    assert tokens.shape == (1, 16)
    assert tokens[0, -1] == tok.eot_id
    assert eot[0] == 15
    assert (tokens[0] != 0).all()
    assert any("truncated" in rec.getMessage() for rec in caplog.records)


def test_encode_batch_default_context():
    tok, _ = tiny_tokenizer()
    tokens, _ = tok.encode_batch(["sock"])
    assert tokens.shape == (1, DEFAULT_CONTEXT_LENGTH)


def test_encode_deterministic_with_cache():
    tok, _ = tiny_tokenizer()
    first = tok.encode("sock low lows sock")
    second = tok.encode("sock low lows sock")
    assert first == second


def _reference_clip_tokenizer(tmp_path, vocab, merges_lines):
    transformers = pytest.importorskip("transformers")
    vocab_path = tmp_path / "vocab.json"
    merges_path = tmp_path / "merges.txt"
    vocab_path.write_text(json.dumps(vocab), encoding="utf-8")
    merges_path.write_text("#version: 0.2\n" + "\n".join(merges_lines) + "\n", encoding="utf-8")
    try:
        return transformers.CLIPTokenizer(str(vocab_path), str(merges_path))
    except Exception as exc:  # pragma: no cover - environment-dependent
        pytest.skip(f"reference tokenizer unavailable: {exc}")


def test_matches_reference_implementation(tmp_path):
    tok, vocab = tiny_tokenizer()
    merges_lines = ["s o", "so c", "soc k</w>", "l o", "o w"]
    reference = _reference_clip_tokenizer(tmp_path, vocab, merges_lines)
    corpus = [
        "a photo of a sock",
        "a photo of a sock and a vase",
        "a photo of a sock, a vase, and an umbrella",
        "low lows sock.",
        "A PHOTO OF A SOCK",
        "",
        "it's a sock",
        "sock!! 42",
        "we'll don't i'm",
        "  spaces   everywhere  ",
        "café sock",
        "a--b",
        "'x",
        "3.14 low",
    ]
    for text in corpus:
        ours = [tok.sot_id] + tok.encode(text) + [tok.eot_id]
        theirs = reference(text)["input_ids"]
        assert ours == theirs, text
