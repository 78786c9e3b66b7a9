"""Procedural sprite scenes: one colored shape on a textured backdrop.

Subjects render with crisp boolean supports (no anti-aliasing), so the
generator's mask is exact. Background textures keep their amplitude small
(RGB distance well under the color segmenter's threshold) while subjects
are saturated, which makes segmentation on generator output effectively
oracle-grade.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..denoiser.vocab import COLOR_WORDS

SHAPES = ("circle", "square", "star", "triangle")
TEXTURES = ("flat", "hgrad", "vgrad", "checker", "speckle")

# label -> (shape, canonical hue in degrees)
CLASS_SPECS: dict[str, tuple[str, float]] = {
    "ball": ("circle", 0.0),
    "coin": ("circle", 50.0),
    "crate": ("square", 25.0),
    "tile": ("square", 210.0),
    "badge": ("star", 120.0),
    "spark": ("star", 275.0),
    "kite": ("triangle", 180.0),
    "cone": ("triangle", 315.0),
}
CLASS_ORDER = tuple(CLASS_SPECS)

BAND_HEIGHT = 7
BAND_SHIFT = 0.07  # keeps the band below the segmentation threshold


def hsv_to_rgb(h_deg: float, s: float, v: float) -> np.ndarray:
    h = (h_deg % 360.0) / 60.0
    i = int(math.floor(h)) % 6
    f = h - math.floor(h)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    rgb = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]
    return np.array(rgb, dtype=np.float32)


def rgb_to_hue(rgb) -> float:
    r, g, b = float(rgb[0]), float(rgb[1]), float(rgb[2])
    mx, mn = max(r, g, b), min(r, g, b)
    if mx == mn:
        return 0.0
    d = mx - mn
    if mx == r:
        h = ((g - b) / d) % 6.0
    elif mx == g:
        h = (b - r) / d + 2.0
    else:
        h = (r - g) / d + 4.0
    return (h * 60.0) % 360.0


def hue_distance(a: float, b: float) -> float:
    d = abs((a % 360.0) - (b % 360.0))
    return min(d, 360.0 - d)


def color_word_for_hue(hue: float) -> str:
    return COLOR_WORDS[int(((hue % 360.0) + 22.5) // 45.0) % 8]


@dataclass(frozen=True)
class SceneSpec:
    """Everything needed to re-render a scene deterministically."""

    class_label: str
    hue: float
    sat: float
    val: float
    shape: str
    scale: int
    cx: int
    cy: int
    texture: str
    bg_hue: float
    bg_sat: float
    bg_val: float
    speckle_seed: int = 0
    has_subject: bool = True
    band: bool = False
    band_y: int = 0
    view_tag: str = "front"
    difficulty: str = "easy"
    bbox: tuple[int, int, int, int] | None = None

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}")
        if self.texture not in TEXTURES:
            raise ValueError(f"unknown texture {self.texture!r}")
        if self.bbox is not None and not isinstance(self.bbox, tuple):
            object.__setattr__(self, "bbox", tuple(self.bbox))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bbox"] = list(self.bbox) if self.bbox is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        if d.get("bbox") is not None:
            d["bbox"] = tuple(d["bbox"])
        return cls(**d)


def shape_support(shape: str, cx: int, cy: int, scale: int, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    dx = xx - cx
    dy = yy - cy
    if shape == "circle":
        return dx * dx + dy * dy <= scale * scale
    if shape == "square":
        a = max(1, int(round(scale * 0.85)))
        return (np.abs(dx) <= a) & (np.abs(dy) <= a)
    if shape == "star":
        # five-lobed radial profile: pointy arms, solid core
        theta = np.arctan2(dy, dx)
        lobe = 0.5 + 0.5 * np.cos(5.0 * (theta + np.pi / 2.0))
        radius = scale * (0.45 + 0.55 * lobe ** 1.5)
        return np.hypot(dx, dy) <= radius
    # triangle: apex up, base at cy + scale
    top = cy - scale
    height = 2 * scale
    frac = np.clip((yy - top) / height, 0.0, 1.0)
    return (yy >= top) & (yy <= cy + scale) & (np.abs(dx) <= frac * scale)


def render_scene(spec: SceneSpec, size: int) -> tuple[np.ndarray, np.ndarray | None]:
    """Render a spec to (image in [0,1], exact subject mask or None)."""
    base = hsv_to_rgb(spec.bg_hue, spec.bg_sat, spec.bg_val)
    img = np.ones((size, size, 3), dtype=np.float32) * base[None, None, :]

    if spec.texture == "hgrad":
        ramp = np.linspace(-0.04, 0.04, size, dtype=np.float32)
        img += ramp[None, :, None]
    elif spec.texture == "vgrad":
        ramp = np.linspace(-0.04, 0.04, size, dtype=np.float32)
        img += ramp[:, None, None]
    elif spec.texture == "checker":
        yy, xx = np.mgrid[0:size, 0:size]
        cells = ((yy // 8) + (xx // 8)) % 2
        img += (cells[:, :, None].astype(np.float32) - 0.5) * 0.06
    elif spec.texture == "speckle":
        rng = np.random.default_rng(spec.speckle_seed)
        img += rng.uniform(-0.05, 0.05, (size, size)).astype(np.float32)[:, :, None]

    if spec.band:
        img[spec.band_y : spec.band_y + BAND_HEIGHT] -= BAND_SHIFT

    img = np.clip(img, 0.05, 0.95)

    if not spec.has_subject:
        return img, None

    support = shape_support(spec.shape, spec.cx, spec.cy, spec.scale, size)
    if not support.any():
        raise ValueError(f"subject with scale {spec.scale} rendered empty at size {size}")
    color = hsv_to_rgb(spec.hue, spec.sat, spec.val)
    yy, xx = np.mgrid[0:size, 0:size]
    rn = np.hypot(xx - spec.cx, yy - spec.cy) / max(1, spec.scale)
    shade = (1.0 - 0.2 * np.clip(rn, 0.0, 1.2) ** 2).astype(np.float32)
    sprite = color[None, None, :] * shade[:, :, None]
    img = np.where(support[:, :, None], np.clip(sprite, 0.0, 1.0), img)
    return img, support
