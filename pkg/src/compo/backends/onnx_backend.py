"""Real scoring backend: runs exported encoder/classifier graphs from a
model bundle directory.

Bundle layout: image_encoder.onnx, text_encoder.onnx, classifier.onnx,
preprocess.json, vocab.json, merges.txt, golden_fixtures.json. The embedding
backend needs the encoders plus tokenizer and preprocessing files; the
classifier backend needs classifier.onnx and preprocess.json.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from ..errors import BundleIncomplete, BundleMismatch, ImageLoadError
from .contracts import ImageRef, SubsetText
from .onnx_format import DT_FLOAT, DT_INT64, load_model
from .onnx_runtime import GraphRunner, check_finite
from .preprocess import load_preprocess_config, preprocess_image
from .tokenizer import DEFAULT_CONTEXT_LENGTH, BpeTokenizer

BUNDLE_FILES = (
    "image_encoder.onnx",
    "text_encoder.onnx",
    "classifier.onnx",
    "preprocess.json",
    "vocab.json",
    "merges.txt",
    "golden_fixtures.json",
)
EMBED_FILES = (
    "image_encoder.onnx",
    "text_encoder.onnx",
    "preprocess.json",
    "vocab.json",
    "merges.txt",
)
CLASSIFIER_FILES = ("classifier.onnx", "preprocess.json")

DEFAULT_BATCH = 32


def check_bundle(bundle_dir: str | Path, required=BUNDLE_FILES) -> Path:
    bundle_dir = Path(bundle_dir)
    missing = [name for name in required if not (bundle_dir / name).is_file()]
    if missing:
        raise BundleIncomplete(missing)
    return bundle_dir


def _bundle_id(bundle_dir: Path, files) -> str:
    h = hashlib.sha256()
    for name in files:
        h.update(name.encode("utf-8"))
        h.update((bundle_dir / name).read_bytes())
    return h.hexdigest()[:12]


def _batched(matrix_fn, items, batch: int) -> np.ndarray:
    chunks = [matrix_fn(items[i : i + batch]) for i in range(0, len(items), batch)]
    return np.concatenate(chunks, axis=0) if len(chunks) > 1 else chunks[0]


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    return matrix / norms


def _concrete(dim) -> int | None:
    return dim if isinstance(dim, int) and dim > 0 else None


class OnnxEmbeddingBackend:
    """Text/image encoder pair loaded from a model bundle."""

    def __init__(self, bundle_dir: str | Path, batch_size: int = DEFAULT_BATCH):
        bundle_dir = check_bundle(bundle_dir, EMBED_FILES)
        self.bundle_dir = bundle_dir
        self.batch_size = batch_size
        self.backend_id = f"onnx:{_bundle_id(bundle_dir, EMBED_FILES)}"
        self.preprocess = load_preprocess_config(bundle_dir / "preprocess.json")
        self.tokenizer = BpeTokenizer.from_files(
            bundle_dir / "vocab.json", bundle_dir / "merges.txt"
        )
        self.text_runner = GraphRunner(load_model(bundle_dir / "text_encoder.onnx"))
        self.image_runner = GraphRunner(load_model(bundle_dir / "image_encoder.onnx"))

        text_inputs = self.text_runner.input_infos
        int_inputs = [vi for vi in text_inputs if vi.elem_type == DT_INT64]
        float_inputs = [vi for vi in text_inputs if vi.elem_type == DT_FLOAT]
        if len(int_inputs) != 1 or len(float_inputs) != 1 or len(text_inputs) != 2:
            raise BundleMismatch(
                "text encoder must take one int64 token input and one float "
                f"pooling-weight input, found {[vi.name for vi in text_inputs]}"
            )
        self.tokens_input = int_inputs[0].name
        self.pool_input = float_inputs[0].name
        self.context_length = (
            _concrete(int_inputs[0].shape[-1]) if int_inputs[0].shape else None
        ) or DEFAULT_CONTEXT_LENGTH

        image_inputs = self.image_runner.input_infos
        if len(image_inputs) != 1 or image_inputs[0].elem_type != DT_FLOAT:
            raise BundleMismatch("image encoder must take a single float input")
        self.image_input = image_inputs[0].name
        shape = image_inputs[0].shape
        if len(shape) != 4 or _concrete(shape[1]) != 3:
            raise BundleMismatch(f"image input must be NCHW with 3 channels, got {shape}")
        side = _concrete(shape[2])
        if side is not None and side != int(self.preprocess["image_size"]):
            raise BundleMismatch(
                f"image graph expects {side}px inputs but preprocess.json "
                f"produces {self.preprocess['image_size']}px"
            )
        self.embed_dim = self._probe_embed_dim()

    def _probe_embed_dim(self) -> int:
        out = self.text_runner.graph.outputs[0]
        dim = _concrete(out.shape[-1]) if out.shape else None
        if dim is None:
            dim = self.embed_texts([SubsetText(text="")]).shape[1]
        return dim

    def _run_texts(self, texts: list[str]) -> np.ndarray:
        tokens, eot_positions = self.tokenizer.encode_batch(texts, self.context_length)
        onehot = np.zeros((len(texts), self.context_length), dtype=np.float32)
        onehot[np.arange(len(texts)), eot_positions] = 1.0
        outputs = self.text_runner.run({self.tokens_input: tokens, self.pool_input: onehot})
        name = self.text_runner.output_names[0]
        return check_finite(name, outputs[name])

    def embed_texts(self, subsets: list[SubsetText]) -> np.ndarray:
        texts = [s.text for s in subsets]
        matrix = _batched(self._run_texts, texts, self.batch_size)
        return _normalize_rows(matrix.astype(np.float64))

    def _run_images(self, pixel_batch: list[np.ndarray]) -> np.ndarray:
        feed = np.stack(pixel_batch).astype(np.float32)
        outputs = self.image_runner.run({self.image_input: feed})
        name = self.image_runner.output_names[0]
        return check_finite(name, outputs[name])

    def embed_images(self, images: list[ImageRef]) -> np.ndarray:
        pixels = []
        for ref in images:
            if ref.path is None:
                raise ImageLoadError("<none>", "image reference has no path")
            pixels.append(preprocess_image(ref.path, self.preprocess))
        matrix = _batched(self._run_images, pixels, self.batch_size)
        return _normalize_rows(matrix.astype(np.float64))


class OnnxClassifierBackend:
    """Classifier graph with named "probs" and "features" outputs."""

    def __init__(self, bundle_dir: str | Path, batch_size: int = DEFAULT_BATCH):
        bundle_dir = check_bundle(bundle_dir, CLASSIFIER_FILES)
        self.bundle_dir = bundle_dir
        self.batch_size = batch_size
        self.backend_id = f"onnx-classifier:{_bundle_id(bundle_dir, CLASSIFIER_FILES)}"
        self.preprocess = load_preprocess_config(bundle_dir / "preprocess.json")
        self.runner = GraphRunner(load_model(bundle_dir / "classifier.onnx"))
        names = set(self.runner.output_names)
        if not {"probs", "features"} <= names:
            raise BundleMismatch(
                f'classifier graph must output "probs" and "features", found {sorted(names)}'
            )
        by_name = {vi.name: vi for vi in self.runner.graph.outputs}
        self.class_count = _concrete(by_name["probs"].shape[-1]) or 0
        self.feature_dim = _concrete(by_name["features"].shape[-1]) or 0

    def _run(self, refs: list[ImageRef]) -> dict[str, np.ndarray]:
        pixels = []
        for ref in refs:
            if ref.path is None:
                raise ImageLoadError("<none>", "image reference has no path")
            pixels.append(preprocess_image(ref.path, self.preprocess))
        input_name = self.runner.input_infos[0].name
        return self.runner.run({input_name: np.stack(pixels).astype(np.float32)})

    def _collect(self, refs: list[ImageRef], key: str) -> np.ndarray:
        chunks = []
        for i in range(0, len(refs), self.batch_size):
            out = self._run(refs[i : i + self.batch_size])
            chunks.append(check_finite(key, out[key]))
        matrix = np.concatenate(chunks, axis=0) if len(chunks) > 1 else chunks[0]
        return matrix.astype(np.float64)

    def class_probs(self, images: list[ImageRef]) -> np.ndarray:
        probs = self._collect(images, "probs")
        if self.class_count == 0:
            self.class_count = probs.shape[1]
        return probs

    def features(self, images: list[ImageRef]) -> np.ndarray:
        features = self._collect(images, "features")
        if self.feature_dim == 0:
            self.feature_dim = features.shape[1]
        return features
