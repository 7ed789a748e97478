import pytest
from hypothesis import given
from hypothesis import strategies as st

from compo.errors import DuplicateLabel, EmptyVocabulary, InvalidParameter, MalformedLine
from compo.vocabulary import article_for, load_vocabulary


def test_plain_lines_mapping(tmp_path):
    path = tmp_path / "labels.txt"
    path.write_text("sock\nvase\n", encoding="utf-8")
    vocab = load_vocabulary(path)
    assert [(lab.index, lab.name) for lab in vocab] == [(0, "sock"), (1, "vase")]
    assert vocab.size == 2


def test_thousand_line_file(tmp_path):
    path = tmp_path / "labels.txt"
    path.write_text("\n".join(f"class {i}" for i in range(1000)), encoding="utf-8")
    assert load_vocabulary(path).size == 1000


def test_case_insensitive_duplicate(tmp_path):
    path = tmp_path / "labels.txt"
    path.write_text("Sock\nsock\n", encoding="utf-8")
    with pytest.raises(DuplicateLabel) as err:
        load_vocabulary(path)
    assert err.value.name == "sock"
    assert err.value.lines == (1, 2)


def test_empty_file(tmp_path):
    path = tmp_path / "labels.txt"
    path.write_text("# only a comment\n\n", encoding="utf-8")
    with pytest.raises(EmptyVocabulary):
        load_vocabulary(path)


def test_synonym_list_truncated_at_first_comma(tmp_path):
    path = tmp_path / "labels.txt"
    path.write_text("tench, Tinca tinca\ngoldfish, Carassius auratus\n", encoding="utf-8")
    vocab = load_vocabulary(path)
    assert vocab.by_index(0).name == "tench"
    assert vocab.by_index(1).name == "goldfish"


def test_comment_and_blank_lines_skipped(tmp_path):
    path = tmp_path / "labels.txt"
    path.write_text("# header\nsock\n\nvase\n", encoding="utf-8")
    vocab = load_vocabulary(path)
    assert vocab.size == 2
    assert vocab.by_index(1).name == "vase"


def test_names_lowercased_and_whitespace_normalized(tmp_path):
    path = tmp_path / "labels.txt"
    path.write_text("Acoustic   Guitar\n", encoding="utf-8")
    assert load_vocabulary(path).by_index(0).name == "acoustic guitar"


def test_id_tab_name_format(tmp_path):
    path = tmp_path / "labels.tsv"
    path.write_text("n04254777\tsock\nn04522168\tvase\n", encoding="utf-8")
    vocab = load_vocabulary(path)
    assert vocab.by_index(0).source_id == "n04254777"
    assert vocab.by_index(1).name == "vase"


def test_id_tab_name_missing_tab(tmp_path):
    path = tmp_path / "labels.tsv"
    path.write_text("n04254777\tsock\nbroken line\n", encoding="utf-8")
    with pytest.raises(MalformedLine) as err:
        load_vocabulary(path)
    assert err.value.line_no == 2


def test_unknown_format_rejected(tmp_path):
    path = tmp_path / "labels.txt"
    path.write_text("sock\n", encoding="utf-8")
    with pytest.raises(InvalidParameter):
        load_vocabulary(path, format="csv")


def test_by_name_and_contains(vocab):
    assert vocab.by_name("Steel  Drum").index == 6
    assert "crab" in vocab
    assert "submarine" not in vocab
    with pytest.raises(InvalidParameter):
        vocab.by_name("submarine")
    with pytest.raises(InvalidParameter):
        vocab.by_index(len(vocab))


def test_round_trip_name_index(vocab):
    for label in vocab:
        assert vocab.by_name(label.name).index == label.index


def test_content_hash_stable_and_order_sensitive(tmp_path):
    a = tmp_path / "a.txt"
    b = tmp_path / "b.txt"
    a.write_text("sock\nvase\n", encoding="utf-8")
    b.write_text("vase\nsock\n", encoding="utf-8")
    va1, va2, vb = load_vocabulary(a), load_vocabulary(a), load_vocabulary(b)
    assert va1.content_hash() == va2.content_hash()
    assert va1.content_hash() != vb.content_hash()


def test_article_examples():
    assert article_for("acoustic guitar") == "an"
    assert article_for("sock") == "a"
    assert article_for("orange tabby") == "an"
    assert article_for("umbrella") == "an"
    assert article_for("steel drum") == "a"
    assert article_for("3-wheeler") == "a"  # skips to the first alphabetic char


@given(st.text(min_size=1).filter(lambda s: s.strip()))
def test_article_is_binary_and_pure(name):
    first = article_for(name)
    assert first in ("a", "an")
    assert article_for(name) == first
    alpha = next((ch for ch in name if ch.isalpha()), None)
    if alpha is not None and alpha.lower() in "aeiou":
        assert first == "an"


def test_load_deterministic(tmp_path):
    path = tmp_path / "labels.txt"
    path.write_text("sock\nvase\ncrab\n", encoding="utf-8")
    first = load_vocabulary(path)
    second = load_vocabulary(path)
    assert first == second
