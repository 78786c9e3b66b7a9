"""Image array conventions, PNG round-trips, hashing, and seed derivation.

Arrays everywhere in this package follow one convention:

- images are ``float32`` arrays of shape ``(H, W, 3)`` with values in [0, 1]
- masks are ``bool`` arrays of shape ``(H, W)``
- the diffusion model consumes images remapped to [-1, 1] (``to_model``)

PNG files are the only on-disk image format: 8-bit RGB for images, 1-bit
grayscale for masks.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
from PIL import Image


def to_model(img: np.ndarray) -> np.ndarray:
    """Map a [0, 1] image into the [-1, 1] domain the denoiser trains in."""
    return (img.astype(np.float32) * np.float32(2.0)) - np.float32(1.0)


def from_model(z: np.ndarray) -> np.ndarray:
    """Map a [-1, 1] model-domain array back to a clipped [0, 1] image."""
    img = (z.astype(np.float32) + np.float32(1.0)) * np.float32(0.5)
    return np.clip(img, 0.0, 1.0)


def quantize(img: np.ndarray) -> np.ndarray:
    """[0, 1] float image to the uint8 values a PNG write would store."""
    arr = np.clip(img, 0.0, 1.0)
    return np.round(arr * 255.0).astype(np.uint8)


def save_png(path: str | Path, img: np.ndarray) -> None:
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {img.shape}")
    Image.fromarray(quantize(img), mode="RGB").save(path, format="PNG")


def load_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return arr.astype(np.float32) / np.float32(255.0)


def save_mask_png(path: str | Path, mask: np.ndarray) -> None:
    """Store a boolean mask as a 1-bit PNG."""
    if mask.ndim != 2:
        raise ValueError(f"expected (H, W) mask, got shape {mask.shape}")
    Image.fromarray(mask.astype(bool)).convert("1").save(path, format="PNG")


def load_mask_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("1"))
    return arr.astype(bool)


def array_hash(arr: np.ndarray) -> str:
    """sha256 over dtype, shape, and raw bytes of a C-contiguous copy."""
    arr = np.ascontiguousarray(arr)
    h = hashlib.sha256()
    h.update(str(arr.dtype).encode())
    h.update(str(arr.shape).encode())
    h.update(arr.tobytes())
    return h.hexdigest()


def derive_seed(base_seed: int, *parts: str) -> int:
    """Stable per-item seed: sha256 of the base seed and string parts.

    Python's builtin hash() is salted per process, so it must never feed
    RNG seeding; this keeps seeds identical across runs and machines.
    """
    text = ":".join([str(int(base_seed)), *parts])
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2**63)


def canonical_json(obj) -> str:
    """Deterministic JSON text: sorted keys, two-space indent, newline at EOF."""
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(canonical_json(obj))


def read_json(path: str | Path):
    return json.loads(Path(path).read_text())


def round_floats(obj, ndigits: int = 6):
    """Recursively round floats so serialized reports stay byte-stable."""
    if isinstance(obj, float):
        return round(obj, ndigits)
    if isinstance(obj, dict):
        return {k: round_floats(v, ndigits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v, ndigits) for v in obj]
    if isinstance(obj, (np.floating,)):
        return round(float(obj), ndigits)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj
