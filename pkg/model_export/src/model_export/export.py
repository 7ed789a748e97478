"""Bundle export: serializes the reference models into ONNX graphs and emits
every file the scoring backends load.

A complete bundle directory holds the three graphs (text_encoder.onnx,
image_encoder.onnx, classifier.onnx), tokenizer files (vocab.json,
merges.txt), preprocess.json, golden_fixtures.json with reference outputs
for parity checks, the fixture images those outputs were computed from, and
export_manifest.json recording content hashes plus the pinned opset/IR
versions.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .graph_builder import IR_VERSION, OPSET, GraphBuilder
from .onnx_writer import DT_FLOAT, DT_INT64
from .preprocessing import load_pixels, preprocess_config
from .reference import (
    Classifier,
    ClassifierConfig,
    ClipConfig,
    ImageEncoder,
    TextEncoder,
    seeded_classifier,
    seeded_image_encoder,
    seeded_text_encoder,
    reduced_classifier_config,
    reduced_clip_config,
)
from .tokenizer_files import build_test_vocab, write_tokenizer_files

# Complete-bundle manifest list; completeness is machine-checked against it.
BUNDLE_FILES = (
    "image_encoder.onnx",
    "text_encoder.onnx",
    "classifier.onnx",
    "preprocess.json",
    "vocab.json",
    "merges.txt",
    "golden_fixtures.json",
)
MANIFEST_NAME = "export_manifest.json"
FIXTURE_DIR = "fixtures"

FIXTURE_TEXTS = (
    "",
    "a photo of a sock, a vase, and an umbrella",
    "a photo of a sock",
    "a photo of a vase and an umbrella",
    "a rendering of a backpack and a ladder",
    "a photo of a clock and a hammer",
    "the quick brown fox jumps over a lazy dog",
    "a photo of a teapot, a gold fish, and a park bench",
)


class ExportError(RuntimeError):
    """Unusable export request (missing inputs, conflicting bundle state)."""


class CheckpointMismatch(RuntimeError):
    """Checkpoint bytes do not hash to the expected digest."""

    def __init__(self, path: Path, expected: str, actual: str):
        self.path = Path(path)
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"checkpoint hash mismatch for {path}: expected sha256 {expected}, actual {actual}"
        )


def sha256_path(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def load_checkpoint(path: Path, expected_sha256: str) -> dict:
    """Hash-gated checkpoint read; any digest disagreement aborts the export."""
    if not expected_sha256:
        raise ExportError(f"checkpoint {path} given without an expected sha256 digest")
    actual = sha256_path(path)
    if actual != expected_sha256.strip().lower():
        raise CheckpointMismatch(path, expected_sha256.strip().lower(), actual)
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if not isinstance(payload, dict) or "config" not in payload:
        raise ExportError(f"checkpoint {path} is not an export checkpoint (no config entry)")
    return payload


# --- weight helpers ----------------------------------------------------------


def _w(tensor: torch.Tensor) -> np.ndarray:
    return tensor.detach().cpu().numpy().astype(np.float32)


def _linear(g: GraphBuilder, x: str, linear: torch.nn.Linear, stem: str) -> str:
    weight = g.initializer(f"{stem}.weight_t", _w(linear.weight).T)
    bias = g.initializer(f"{stem}.bias", _w(linear.bias))
    product = g.node("MatMul", [x, weight], out=f"{stem}.matmul")
    return g.node("Add", [product, bias], out=f"{stem}.out")


def _layer_norm(g: GraphBuilder, x: str, norm: torch.nn.LayerNorm, stem: str) -> str:
    scale = g.initializer(f"{stem}.scale", _w(norm.weight))
    bias = g.initializer(f"{stem}.bias", _w(norm.bias))
    return g.node(
        "LayerNormalization", [x, scale, bias], out=f"{stem}.out", axis=-1, epsilon=float(norm.eps)
    )


def _attention(g: GraphBuilder, x: str, attn, stem: str, mask: str | None) -> str:
    width = attn.q_proj.in_features
    head_dim = width // attn.heads
    head_shape = g.const_i64(f"{stem}.head_shape", [0, 0, attn.heads, head_dim])
    merge_shape = g.const_i64(f"{stem}.merge_shape", [0, 0, width])

    def heads(name: str, proj: torch.nn.Linear) -> str:
        y = _linear(g, x, proj, f"{stem}.{name}")
        split = g.node("Reshape", [y, head_shape], out=f"{stem}.{name}_split")
        return g.node("Transpose", [split], out=f"{stem}.{name}_heads", perm=[0, 2, 1, 3])

    q = heads("q", attn.q_proj)
    k = heads("k", attn.k_proj)
    v = heads("v", attn.v_proj)
    k_t = g.node("Transpose", [k], out=f"{stem}.k_t", perm=[0, 1, 3, 2])
    scores = g.node("MatMul", [q, k_t], out=f"{stem}.scores")
    scale = g.initializer(f"{stem}.scale", np.asarray(attn.scale, dtype=np.float32))
    scores = g.node("Mul", [scores, scale], out=f"{stem}.scaled")
    if mask is not None:
        scores = g.node("Add", [scores, mask], out=f"{stem}.masked")
    probs = g.node("Softmax", [scores], out=f"{stem}.probs", axis=-1)
    mixed = g.node("MatMul", [probs, v], out=f"{stem}.mixed")
    joined = g.node("Transpose", [mixed], out=f"{stem}.joined", perm=[0, 2, 1, 3])
    merged = g.node("Reshape", [joined, merge_shape], out=f"{stem}.merged")
    return _linear(g, merged, attn.out_proj, f"{stem}.out_proj")


def _transformer_block(g: GraphBuilder, x: str, block, stem: str, mask: str | None) -> str:
    normed = _layer_norm(g, x, block.ln_1, f"{stem}.ln_1")
    attended = _attention(g, normed, block.attn, f"{stem}.attn", mask)
    x = g.node("Add", [x, attended], out=f"{stem}.residual_1")
    normed = _layer_norm(g, x, block.ln_2, f"{stem}.ln_2")
    hidden = _linear(g, normed, block.fc1, f"{stem}.fc1")
    slope = g.initializer(f"{stem}.gelu_slope", np.asarray(1.702, dtype=np.float32))
    gated = g.node("Mul", [hidden, slope], out=f"{stem}.gelu_gate")
    sig = g.node("Sigmoid", [gated], out=f"{stem}.gelu_sig")
    activated = g.node("Mul", [hidden, sig], out=f"{stem}.gelu_out")
    projected = _linear(g, activated, block.fc2, f"{stem}.fc2")
    return g.node("Add", [x, projected], out=f"{stem}.residual_2")


# --- graph builders ----------------------------------------------------------


def build_text_model(model: TextEncoder) -> bytes:
    cfg = model.config
    g = GraphBuilder("text_encoder")
    table = g.initializer("token_embedding", _w(model.token_embedding.weight))
    embedded = g.node("Gather", [table, "tokens"], out="embedded")
    positions = g.initializer("positional_embedding", _w(model.positional_embedding))
    x = g.node("Add", [embedded, positions], out="positioned")
    mask = g.initializer("attn_mask", _w(model.attn_mask))
    for i, block in enumerate(model.blocks):
        x = _transformer_block(g, x, block, f"block_{i}", mask)
    x = _layer_norm(g, x, model.ln_final, "ln_final")
    pool_axes = g.const_i64("pool_axes", [2])
    pool = g.node("Unsqueeze", ["pool_weights", pool_axes], out="pool_columns")
    weighted = g.node("Mul", [x, pool], out="weighted")
    sum_axes = g.const_i64("token_axis", [1])
    pooled = g.node("ReduceSum", [weighted, sum_axes], out="pooled", keepdims=0)
    projection = g.initializer("projection", _w(model.projection))
    g.node("MatMul", [pooled, projection], outputs=["text_embedding"])
    return g.model_bytes(
        inputs=[
            ("tokens", DT_INT64, ["batch", cfg.context_length]),
            ("pool_weights", DT_FLOAT, ["batch", cfg.context_length]),
        ],
        outputs=[("text_embedding", DT_FLOAT, ["batch", cfg.embed_dim])],
        doc_string="token transformer pooled at caller-marked positions",
    )


def build_image_model(model: ImageEncoder) -> bytes:
    cfg = model.config
    g = GraphBuilder("image_encoder")
    patch_w = g.initializer("patch_embed", _w(model.patch_embed.weight))
    patches = g.node(
        "Conv", ["pixels", patch_w], out="patches", strides=[cfg.patch_size, cfg.patch_size]
    )
    rows = g.node("Reshape", [patches, g.const_i64("row_shape", [0, 0, -1])], out="patch_rows")
    seq = g.node("Transpose", [rows], out="patch_seq", perm=[0, 2, 1])
    batch = g.node("Shape", ["pixels"], out="batch_dim", start=0, end=1)
    tail = g.const_i64("class_tail", [1, cfg.vision_width])
    target = g.node("Concat", [batch, tail], out="class_shape", axis=0)
    class_embedding = g.initializer(
        "class_embedding", _w(model.class_embedding).reshape(1, 1, -1)
    )
    class_token = g.node("Expand", [class_embedding, target], out="class_token")
    tokens = g.node("Concat", [class_token, seq], out="token_seq", axis=1)
    positions = g.initializer("positional_embedding", _w(model.positional_embedding))
    x = g.node("Add", [tokens, positions], out="positioned")
    x = _layer_norm(g, x, model.ln_pre, "ln_pre")
    for i, block in enumerate(model.blocks):
        x = _transformer_block(g, x, block, f"block_{i}", mask=None)
    x = _layer_norm(g, x, model.ln_post, "ln_post")
    pooled = g.node("Gather", [x, g.scalar_i64("class_index", 0)], out="class_state", axis=1)
    projection = g.initializer("projection", _w(model.projection))
    g.node("MatMul", [pooled, projection], outputs=["image_embedding"])
    return g.model_bytes(
        inputs=[("pixels", DT_FLOAT, ["batch", 3, cfg.image_size, cfg.image_size])],
        outputs=[("image_embedding", DT_FLOAT, ["batch", cfg.embed_dim])],
        doc_string="patch transformer pooled at the class token",
    )


def build_classifier_model(model: Classifier) -> bytes:
    cfg = model.config
    g = GraphBuilder("classifier")
    x = "pixels"
    for i, (conv, norm) in enumerate(zip(model.convs, model.norms)):
        weight = g.initializer(f"conv_{i}.weight", _w(conv.weight))
        x = g.node("Conv", [x, weight], out=f"conv_{i}.out", strides=[2, 2], pads=[1, 1, 1, 1])
        stats = [
            g.initializer(f"norm_{i}.scale", _w(norm.weight)),
            g.initializer(f"norm_{i}.bias", _w(norm.bias)),
            g.initializer(f"norm_{i}.mean", _w(norm.running_mean)),
            g.initializer(f"norm_{i}.var", _w(norm.running_var)),
        ]
        x = g.node(
            "BatchNormalization", [x, *stats], out=f"norm_{i}.out", epsilon=float(norm.eps)
        )
        x = g.node("Relu", [x], out=f"relu_{i}.out")
    pooled = g.node("GlobalAveragePool", [x], out="pooled")
    g.node("Flatten", [pooled], outputs=["features"], axis=1)
    fc_w = g.initializer("fc.weight", _w(model.fc.weight))
    fc_b = g.initializer("fc.bias", _w(model.fc.bias))
    logits = g.node("Gemm", ["features", fc_w, fc_b], out="logits", transB=1)
    g.node("Softmax", [logits], outputs=["probs"], axis=-1)
    return g.model_bytes(
        inputs=[("pixels", DT_FLOAT, ["batch", 3, cfg.image_size, cfg.image_size])],
        outputs=[
            ("probs", DT_FLOAT, ["batch", cfg.class_count]),
            ("features", DT_FLOAT, ["batch", cfg.feature_dim]),
        ],
        doc_string="strided conv stack with pooled features and a softmax head",
    )


# --- fixture emission --------------------------------------------------------


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    matrix = matrix.astype(np.float64)
    return matrix / np.linalg.norm(matrix, axis=1, keepdims=True)


def write_fixture_images(bundle_dir: Path) -> list[str]:
    """Deterministic probe images; regenerating produces identical bytes."""
    fix_dir = bundle_dir / FIXTURE_DIR
    fix_dir.mkdir(parents=True, exist_ok=True)

    def save(name: str, array: np.ndarray) -> str:
        Image.fromarray(array, mode="RGB").save(fix_dir / name)
        return f"{FIXTURE_DIR}/{name}"

    rng = np.random.default_rng(20240214)
    gradient = np.zeros((64, 96, 3), dtype=np.uint8)
    gradient[:, :, 0] = np.linspace(0, 255, 96, dtype=np.uint8)[None, :]
    gradient[:, :, 1] = np.linspace(255, 0, 64, dtype=np.uint8)[:, None]
    gradient[:, :, 2] = 128
    checker = np.zeros((32, 32, 3), dtype=np.uint8)
    cells = (np.add.outer(np.arange(32) // 8, np.arange(32) // 8) % 2).astype(bool)
    checker[cells] = (200, 30, 30)
    checker[~cells] = (30, 30, 200)
    return [
        save("black_224.png", np.zeros((224, 224, 3), dtype=np.uint8)),
        save("white_64.png", np.full((64, 64, 3), 255, dtype=np.uint8)),
        save("gradient_96x64.png", gradient),
        save("checker_32.png", checker),
        save("noise_48.png", rng.integers(0, 256, size=(48, 48, 3), dtype=np.uint8)),
    ]


def reference_tokens(
    bundle_dir: Path, texts: list[str], context_length: int
) -> tuple[np.ndarray, np.ndarray]:
    """Token ids and end-of-text one-hot pooling rows from the published
    tokenizer implementation reading the bundle's own vocab/merges files."""
    from transformers import CLIPTokenizer

    tokenizer = CLIPTokenizer(
        str(bundle_dir / "vocab.json"),
        str(bundle_dir / "merges.txt"),
        model_max_length=context_length,
    )
    encoded = tokenizer(
        list(texts), padding="max_length", max_length=context_length, truncation=True
    )
    tokens = np.asarray(encoded["input_ids"], dtype=np.int64)
    eot_positions = (tokens == tokenizer.eos_token_id).argmax(axis=1)
    pool = np.zeros(tokens.shape, dtype=np.float32)
    pool[np.arange(len(texts)), eot_positions] = 1.0
    return tokens, pool


def _update_golden(bundle_dir: Path, **sections) -> None:
    path = bundle_dir / "golden_fixtures.json"
    if path.exists():
        data = json.loads(path.read_text(encoding="utf-8"))
    else:
        data = {"texts": [], "images": [], "classifier": []}
    data.update(sections)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def emit_encoder_fixtures(
    bundle_dir: Path,
    text_model: TextEncoder,
    image_model: ImageEncoder,
    config: dict,
) -> None:
    tokens, pool = reference_tokens(bundle_dir, list(FIXTURE_TEXTS), text_model.config.context_length)
    with torch.no_grad():
        text_out = text_model(torch.from_numpy(tokens), torch.from_numpy(pool))
    text_vectors = _unit_rows(text_out.numpy())
    texts = [
        {"text": text, "embedding": vector.tolist()}
        for text, vector in zip(FIXTURE_TEXTS, text_vectors)
    ]

    paths = write_fixture_images(bundle_dir)
    pixels = np.stack([load_pixels(bundle_dir / rel, config) for rel in paths])
    with torch.no_grad():
        image_out = image_model(torch.from_numpy(pixels))
    image_vectors = _unit_rows(image_out.numpy())
    images = [
        {"path": rel, "embedding": vector.tolist()}
        for rel, vector in zip(paths, image_vectors)
    ]
    _update_golden(bundle_dir, texts=texts, images=images)


def emit_classifier_fixtures(bundle_dir: Path, model: Classifier, config: dict) -> None:
    paths = write_fixture_images(bundle_dir)
    pixels = np.stack([load_pixels(bundle_dir / rel, config) for rel in paths])
    with torch.no_grad():
        probs, features = model(torch.from_numpy(pixels))
    entries = [
        {
            "path": rel,
            "probs": row.astype(np.float64).tolist(),
            "features": feat.astype(np.float64).tolist(),
        }
        for rel, row, feat in zip(paths, probs.numpy(), features.numpy())
    ]
    _update_golden(bundle_dir, classifier=entries)


# --- bundle bookkeeping ------------------------------------------------------


def _write_preprocess(bundle_dir: Path, image_size: int) -> None:
    config = preprocess_config(image_size)
    path = bundle_dir / "preprocess.json"
    if path.exists():
        existing = json.loads(path.read_text(encoding="utf-8"))
        if existing != config:
            raise ExportError(
                f"bundle already has preprocess.json for image_size "
                f"{existing.get('image_size')}, new export wants {image_size}"
            )
    path.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def record_manifest(bundle_dir: Path, export_name: str, info: dict) -> None:
    """Refresh the hash manifest for everything currently in the bundle."""
    path = bundle_dir / MANIFEST_NAME
    if path.exists():
        data = json.loads(path.read_text(encoding="utf-8"))
    else:
        data = {"opset": OPSET, "ir_version": IR_VERSION, "exports": {}, "files": {}}
    data["exports"][export_name] = info
    files = {}
    for file in sorted(bundle_dir.rglob("*")):
        if file.is_file() and file.name != MANIFEST_NAME:
            files[file.relative_to(bundle_dir).as_posix()] = sha256_path(file)
    data["files"] = files
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def missing_bundle_files(bundle_dir: Path) -> list[str]:
    """Which of the required bundle files (plus any fixture images referenced
    by golden_fixtures.json) are absent."""
    bundle_dir = Path(bundle_dir)
    required = list(BUNDLE_FILES)
    golden = bundle_dir / "golden_fixtures.json"
    if golden.exists():
        data = json.loads(golden.read_text(encoding="utf-8"))
        for section in ("images", "classifier"):
            required += [entry["path"] for entry in data.get(section, [])]
    seen = set()
    missing = []
    for name in required:
        if name not in seen and not (bundle_dir / name).is_file():
            missing.append(name)
        seen.add(name)
    return missing


# --- top-level export operations ---------------------------------------------


def _clip_models(
    config_name: str,
    vocab_size: int,
    seed: int,
    payload: dict | None,
) -> tuple[ClipConfig, TextEncoder, ImageEncoder]:
    if payload is not None:
        cfg = ClipConfig(**payload["config"])
        if cfg.vocab_size != vocab_size:
            raise ExportError(
                f"checkpoint was trained with a {cfg.vocab_size}-token vocabulary "
                f"but the bundle tokenizer has {vocab_size} tokens"
            )
        text_model = TextEncoder(cfg)
        text_model.load_state_dict(payload["text_encoder"])
        image_model = ImageEncoder(cfg)
        image_model.load_state_dict(payload["image_encoder"])
        return cfg, text_model.eval(), image_model.eval()
    if config_name == "test":
        cfg = reduced_clip_config(vocab_size)
        return cfg, seeded_text_encoder(cfg, seed), seeded_image_encoder(cfg, seed + 1)
    raise ExportError(
        f"the {config_name} configuration exports released weights; pass "
        "--checkpoint and --checkpoint-sha256 (they are not bundled with this tool)"
    )


def export_clip(
    out_dir: Path,
    config_name: str = "test",
    seed: int = 0,
    checkpoint: Path | None = None,
    checkpoint_sha256: str | None = None,
    vocab_file: Path | None = None,
    merges_file: Path | None = None,
) -> list[str]:
    """Write the encoder half of the bundle; returns the file names written.

    All gates (tokenizer-file pairing, checkpoint hash, preprocess conflicts)
    run before the first byte lands in out_dir, so a failed export leaves no
    partial files behind.
    """
    out_dir = Path(out_dir)

    if (vocab_file is None) != (merges_file is None):
        raise ExportError("pass --vocab-file and --merges-file together")
    if vocab_file is not None:
        vocab_bytes = Path(vocab_file).read_bytes()
        merges_bytes = Path(merges_file).read_bytes()
        vocab = json.loads(vocab_bytes.decode("utf-8"))
    elif config_name != "test" and checkpoint is None:
        raise ExportError(
            f"the {config_name} configuration needs the released tokenizer "
            "files; pass --vocab-file and --merges-file"
        )
    else:
        vocab, merges = build_test_vocab()
        vocab_bytes = None

    info: dict = {"config": config_name, "seed": seed}
    payload = None
    if checkpoint is not None:
        payload = load_checkpoint(checkpoint, checkpoint_sha256 or "")
        info["checkpoint_sha256"] = (checkpoint_sha256 or "").strip().lower()
    cfg, text_model, image_model = _clip_models(config_name, len(vocab), seed, payload)

    out_dir.mkdir(parents=True, exist_ok=True)
    _write_preprocess(out_dir, cfg.image_size)
    if vocab_bytes is not None:
        (out_dir / "vocab.json").write_bytes(vocab_bytes)
        (out_dir / "merges.txt").write_bytes(merges_bytes)
    else:
        write_tokenizer_files(out_dir, vocab, merges)
    (out_dir / "text_encoder.onnx").write_bytes(build_text_model(text_model))
    (out_dir / "image_encoder.onnx").write_bytes(build_image_model(image_model))
    emit_encoder_fixtures(out_dir, text_model, image_model, preprocess_config(cfg.image_size))

    info.update(asdict(cfg))
    record_manifest(out_dir, "clip", info)
    written = [
        "text_encoder.onnx",
        "image_encoder.onnx",
        "vocab.json",
        "merges.txt",
        "preprocess.json",
        "golden_fixtures.json",
        MANIFEST_NAME,
    ]
    return written


def export_inception(
    out_dir: Path,
    config_name: str = "test",
    seed: int = 0,
    checkpoint: Path | None = None,
    checkpoint_sha256: str | None = None,
) -> list[str]:
    """Write the classifier half of the bundle; returns the file names written.

    As with the encoder export, every gate runs before the first write.
    """
    out_dir = Path(out_dir)

    info: dict = {"config": config_name, "seed": seed}
    if checkpoint is not None:
        payload = load_checkpoint(checkpoint, checkpoint_sha256 or "")
        cfg = ClassifierConfig(
            image_size=payload["config"]["image_size"],
            conv_channels=tuple(payload["config"]["conv_channels"]),
            class_count=payload["config"]["class_count"],
        )
        model = Classifier(cfg)
        model.load_state_dict(payload["classifier"])
        model.eval()
        info["checkpoint_sha256"] = (checkpoint_sha256 or "").strip().lower()
    elif config_name == "test":
        cfg = reduced_classifier_config()
        model = seeded_classifier(cfg, seed)
    else:
        raise ExportError(
            f"the {config_name} configuration exports released weights; pass "
            "--checkpoint and --checkpoint-sha256 (they are not bundled with this tool)"
        )

    out_dir.mkdir(parents=True, exist_ok=True)
    _write_preprocess(out_dir, cfg.image_size)
    (out_dir / "classifier.onnx").write_bytes(build_classifier_model(model))
    emit_classifier_fixtures(out_dir, model, preprocess_config(cfg.image_size))

    info.update(asdict(cfg))
    info["conv_channels"] = list(cfg.conv_channels)
    record_manifest(out_dir, "inception", info)
    return ["classifier.onnx", "preprocess.json", "golden_fixtures.json", MANIFEST_NAME]
