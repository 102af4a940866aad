"""Image file helpers: lossless float arrays plus 8-bit previews."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ContractViolation


def save_image(path, image: np.ndarray) -> None:
    """.npy keeps exact floats; .png clips to [0, 1] and quantizes to 8 bit."""
    path = Path(path)
    image = np.asarray(image)
    if path.suffix == ".npy":
        np.save(path, image.astype(np.float64))
    elif path.suffix == ".png":
        arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
        Image.fromarray((arr * 255.0).round().astype(np.uint8)).save(path)
    else:
        raise ContractViolation(f"unsupported image extension: {path.suffix!r}")


def load_image(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path).astype(np.float64)
    if path.suffix == ".png":
        return np.asarray(Image.open(path), dtype=np.float64) / 255.0
    raise ContractViolation(f"unsupported image extension: {path.suffix!r}")
