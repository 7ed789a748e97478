from pathlib import Path

import pytest
from PIL import Image

from compo.vocabulary import Vocabulary, load_vocabulary
from synthetic_manifests import NAMES


@pytest.fixture(scope="session")
def vocab_file(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("vocab") / "labels.txt"
    path.write_text("\n".join(NAMES) + "\n", encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def vocab(vocab_file) -> Vocabulary:
    return load_vocabulary(vocab_file)


@pytest.fixture()
def solid_corpus(tmp_path):
    """Corpus of solid-color squares, one directory per label, one file each.

    Returns (root, color map by label index). Colors are distinct so pixel
    probes can identify which source landed where.
    """
    root = tmp_path / "corpus"
    colors = {}
    for i, name in enumerate(NAMES):
        shade = (
            (37 * i + 11) % 256,
            (91 * i + 53) % 256,
            (173 * i + 29) % 256,
        )
        colors[i] = shade
        class_dir = root / name.replace(" ", "_")
        class_dir.mkdir(parents=True)
        Image.new("RGB", (64, 64), shade).save(class_dir / "img0.png")
    return root, colors
