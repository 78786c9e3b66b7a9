"""Subject masks: segmentation strategies, dilation, boxes, and pasting.

Masks are boolean (H, W) grids wrapped with a provenance tag so runs can
record where each mask came from. Segmentation is pluggable: the color
strategy thresholds distance to an estimated background color, and the
oracle strategy replays a known ground-truth mask (only meaningful on
unedited generator output).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyMaskError, SubjectNotFoundError

# 8-connectivity: diagonal-touching pixels count as one region, so thin
# star arms stay attached to the body.
_CONNECTIVITY = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class Mask:
    """Binary subject mask plus the strategy that produced it."""

    bits: np.ndarray
    provenance: str = "external"

    def __post_init__(self):
        if self.bits.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {self.bits.shape}")
        if self.bits.dtype != np.bool_:
            object.__setattr__(self, "bits", self.bits.astype(bool))

    @property
    def area(self) -> int:
        return int(self.bits.sum())

    def is_empty(self) -> bool:
        return not self.bits.any()


@dataclass(frozen=True)
class Bbox:
    """Axis-aligned box in pixel units; (x, y) is the top-left corner."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"bbox must have positive extent, got w={self.w} h={self.h}")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"bbox origin must be nonnegative, got ({self.x}, {self.y})")

    def inside(self, height: int, width: int) -> bool:
        return self.x + self.w <= width and self.y + self.h <= height

    def as_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]


def _bits(mask) -> np.ndarray:
    if isinstance(mask, Mask):
        return mask.bits
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
    return arr.astype(bool)


def rect_mask(height: int, width: int, box: Bbox, provenance: str = "external") -> Mask:
    """Filled-rectangle mask for a bbox."""
    if not box.inside(height, width):
        raise ValueError(f"bbox {box} does not fit in {height}x{width}")
    bits = np.zeros((height, width), dtype=bool)
    bits[box.y : box.y + box.h, box.x : box.x + box.w] = True
    return Mask(bits, provenance)


class ColorSegmenter:
    """Foreground = pixels far from the border-estimated background color.

    The background color is the per-channel median over a border frame;
    pixels whose RGB distance exceeds the threshold are foreground, and the
    largest 8-connected component wins. Benchmark backgrounds keep their
    texture amplitude well under the threshold while subjects sit far
    above it, so the rule is exact on generator output.
    """

    def __init__(self, threshold: float = 0.15, min_area_frac: float = 0.002, border: int = 2):
        self.threshold = float(threshold)
        self.min_area_frac = float(min_area_frac)
        self.border = int(border)

    def __call__(self, image: np.ndarray, class_label: str) -> Mask:
        h, w = image.shape[:2]
        b = self.border
        frame = np.concatenate([
            image[:b].reshape(-1, 3), image[-b:].reshape(-1, 3),
            image[b:-b, :b].reshape(-1, 3), image[b:-b, -b:].reshape(-1, 3),
        ])
        bg = np.median(frame, axis=0)
        dist = np.sqrt(np.sum((image.astype(np.float32) - bg.astype(np.float32)) ** 2, axis=2))
        fg = dist > self.threshold
        labels, count = ndimage.label(fg, structure=_CONNECTIVITY)
        min_area = self.min_area_frac * h * w
        if count == 0:
            raise SubjectNotFoundError(f"no {class_label!r} region above threshold")
        areas = ndimage.sum_labels(fg, labels, index=np.arange(1, count + 1))
        best = int(np.argmax(areas)) + 1
        if areas[best - 1] < min_area:
            raise SubjectNotFoundError(
                f"largest candidate region for {class_label!r} has area {int(areas[best - 1])}, "
                f"below minimum {min_area:.1f}")
        return Mask(labels == best, provenance="color-segmenter")


class OracleSegmenter:
    """Replays a stored ground-truth mask regardless of image content."""

    def __init__(self, bits: np.ndarray):
        self._mask = Mask(_bits(bits).copy(), provenance="oracle")
        if self._mask.is_empty():
            raise EmptyMaskError("oracle mask is empty")

    def __call__(self, image: np.ndarray, class_label: str) -> Mask:
        if self._mask.bits.shape != image.shape[:2]:
            raise ValueError("oracle mask dimensions do not match the image")
        return self._mask


def segment_subject(image: np.ndarray, class_label: str, segmenter=None) -> Mask:
    """Run a segmentation strategy and sanity-check its output."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got {image.shape}")
    if segmenter is None:
        segmenter = ColorSegmenter()
    mask = segmenter(image, class_label)
    if mask.bits.shape != image.shape[:2]:
        raise ValueError("segmenter returned a mask of mismatched dimensions")
    return mask


def dilate(mask, m: int) -> Mask:
    """Grow a mask by an m x m square window (even m rounds up to odd).

    out[p] is set iff any input pixel falls inside the window centered at
    p; m=1 returns the mask unchanged.
    """
    if m < 1:
        raise ValueError(f"kernel size must be >= 1, got {m}")
    if m % 2 == 0:
        m += 1
    bits = _bits(mask)
    provenance = mask.provenance if isinstance(mask, Mask) else "external"
    if m == 1:
        return Mask(bits.copy(), provenance)
    r = m // 2
    h, w = bits.shape
    padded = np.zeros((h + 2 * r, w + 2 * r), dtype=bool)
    padded[r : r + h, r : r + w] = bits
    out = np.zeros((h, w), dtype=bool)
    for dy in range(m):
        for dx in range(m):
            np.logical_or(out, padded[dy : dy + h, dx : dx + w], out=out)
    return Mask(out, provenance)


def bbox_of(mask) -> Bbox:
    """Tight bounding box of the set pixels."""
    bits = _bits(mask)
    rows = np.nonzero(bits.any(axis=1))[0]
    cols = np.nonzero(bits.any(axis=0))[0]
    if rows.size == 0:
        raise EmptyMaskError("cannot take the bbox of an empty mask")
    return Bbox(x=int(cols[0]), y=int(rows[0]),
                w=int(cols[-1] - cols[0] + 1), h=int(rows[-1] - rows[0] + 1))


def _nn_indices(src_len: int, dst_len: int) -> np.ndarray:
    """Nearest-neighbor source index per destination index: floor((j+0.5)*src/dst)."""
    idx = ((np.arange(dst_len) + 0.5) * src_len / dst_len).astype(np.int64)
    return np.minimum(idx, src_len - 1)


def _scaled_subject(region: Bbox, subject_img: np.ndarray, bits: np.ndarray):
    src_box = bbox_of(bits)
    img_crop = subject_img[src_box.y : src_box.y + src_box.h, src_box.x : src_box.x + src_box.w]
    mask_crop = bits[src_box.y : src_box.y + src_box.h, src_box.x : src_box.x + src_box.w]
    ys = _nn_indices(src_box.h, region.h)
    xs = _nn_indices(src_box.w, region.w)
    return img_crop[ys][:, xs], mask_crop[ys][:, xs]


def paste_support(height: int, width: int, region: Bbox, subject_mask) -> np.ndarray:
    """Exact footprint a copy_paste with these arguments would write to."""
    bits = _bits(subject_mask)
    if not bits.any():
        raise EmptyMaskError("subject mask is empty")
    if not region.inside(height, width):
        raise ValueError(f"paste region {region} falls outside a {height}x{width} image")
    _, scaled_mask = _scaled_subject(region, np.zeros(bits.shape + (3,), dtype=np.float32), bits)
    support = np.zeros((height, width), dtype=bool)
    support[region.y : region.y + region.h, region.x : region.x + region.w] = scaled_mask
    return support


def copy_paste(dest: np.ndarray, region: Bbox, subject_img: np.ndarray, subject_mask) -> np.ndarray:
    """Paste the masked subject, rescaled to fit `region`, into a copy of dest.

    Nearest-neighbor rescaling maps destination index j to source index
    floor((j + 0.5) * src / dst). Pixels outside the rescaled mask are left
    untouched, so nothing outside `region` ever changes.
    """
    bits = _bits(subject_mask)
    if not bits.any():
        raise EmptyMaskError("subject mask is empty")
    if subject_img.shape[:2] != bits.shape:
        raise ValueError("subject image and mask dimensions differ")
    if not region.inside(dest.shape[0], dest.shape[1]):
        raise ValueError(f"paste region {region} falls outside the destination image")

    scaled_img, scaled_mask = _scaled_subject(region, subject_img, bits)
    out = dest.copy()
    window = out[region.y : region.y + region.h, region.x : region.x + region.w]
    window[scaled_mask] = scaled_img[scaled_mask]
    return out
