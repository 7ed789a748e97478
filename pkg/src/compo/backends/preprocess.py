"""Image preprocessing driven by the model bundle's preprocess.json.

All constants (resize target, crop, interpolation, normalization mean/std)
come from the bundle so they always match whatever the export captured;
nothing is hard-coded here.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import BundleMismatch, ImageLoadError

_RESAMPLING = {
    "bicubic": Image.BICUBIC,
    "bilinear": Image.BILINEAR,
    "nearest": Image.NEAREST,
    "lanczos": Image.LANCZOS,
}

REQUIRED_KEYS = ("image_size", "resize_shorter", "interpolation", "mean", "std")


def load_preprocess_config(path: str | Path) -> dict:
    config = json.loads(Path(path).read_text(encoding="utf-8"))
    missing = [k for k in REQUIRED_KEYS if k not in config]
    if missing:
        raise BundleMismatch(f"preprocess config is missing keys: {', '.join(missing)}")
    if config["interpolation"] not in _RESAMPLING:
        raise BundleMismatch(f"unknown interpolation {config['interpolation']!r}")
    if len(config["mean"]) != 3 or len(config["std"]) != 3:
        raise BundleMismatch("mean/std must each have 3 channel values")
    return config


def preprocess_image(source: str | Path | Image.Image, config: dict) -> np.ndarray:
    """Decode, resize (shorter side), center-crop, normalize; returns CHW f32."""
    if isinstance(source, Image.Image):
        img = source.convert("RGB")
    else:
        try:
            with Image.open(source) as decoded:
                img = decoded.convert("RGB")
        except (OSError, ValueError) as exc:
            raise ImageLoadError(str(source), str(exc)) from exc
    shorter = int(config["resize_shorter"])
    crop = int(config["image_size"])
    w, h = img.size
    if w <= h:
        new_w, new_h = shorter, max(1, round(h * shorter / w))
    else:
        new_w, new_h = max(1, round(w * shorter / h)), shorter
    img = img.resize((new_w, new_h), _RESAMPLING[config["interpolation"]])
    left = (new_w - crop) // 2
    top = (new_h - crop) // 2
    img = img.crop((left, top, left + crop, top + crop))
    arr = np.asarray(img, dtype=np.float32) / 255.0
    mean = np.asarray(config["mean"], dtype=np.float32)
    std = np.asarray(config["std"], dtype=np.float32)
    arr = (arr - mean) / std
    return arr.transpose(2, 0, 1)
