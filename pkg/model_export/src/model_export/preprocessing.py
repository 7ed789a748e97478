"""Reference image pipeline used when computing golden fixtures.

Implements the published convention the bundle's preprocess.json describes:
decode to RGB, resize so the shorter side hits resize_shorter (rounding the
long side half-even), center-crop image_size (floor-dividing the margin),
scale to [0, 1], normalize per channel, and lay out CHW float32. Evaluation
backends reimplement this from the JSON; fixtures generated here verify the
two sides agree.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .reference import IMAGE_MEAN, IMAGE_STD

_RESAMPLING = {
    "bicubic": Image.BICUBIC,
    "bilinear": Image.BILINEAR,
    "nearest": Image.NEAREST,
    "lanczos": Image.LANCZOS,
}


def preprocess_config(image_size: int, interpolation: str = "bicubic") -> dict:
    return {
        "image_size": image_size,
        "resize_shorter": image_size,
        "interpolation": interpolation,
        "mean": list(IMAGE_MEAN),
        "std": list(IMAGE_STD),
    }


def load_pixels(path: str | Path, config: dict) -> np.ndarray:
    """CHW float32 network input for one image file."""
    with Image.open(path) as decoded:
        img = decoded.convert("RGB")
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
    return ((arr - mean) / std).transpose(2, 0, 1)
