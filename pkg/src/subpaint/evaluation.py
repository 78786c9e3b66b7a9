"""Automatic and human-protocol scoring.

Two deterministic toy embedders stand in for pretrained perceptual
networks, giving two genuinely different similarity views:

- "dino-like": per-cell mean color plus per-cell gradient-orientation
  histograms on a 4x4 grid (texture- and layout-sensitive)
- "clip-like": a global color histogram pushed through a fixed random
  projection (palette-sensitive, spatially entangled)

Subject similarity compares the generated subject crop against every
exemplar crop of the subject set and averages; background similarity
compares the two images with their subject regions blanked to mid-gray.
The overall automatic score is the per-example geometric mean of the four
numbers, averaged over examples. The human protocol aggregates three
aspect means with zeros replaced by 0.001 before the geometric mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .denoiser import SubjectSet
from .errors import EmptyMaskError
from .masking import ColorSegmenter, Mask, bbox_of, segment_subject

EMBED_SIZE = 32
_BIAS = 0.05
_PROJECTION_SEED = 2718


def _resize_nn(img: np.ndarray, size: int) -> np.ndarray:
    h, w = img.shape[:2]
    ys = np.minimum(((np.arange(size) + 0.5) * h / size).astype(np.int64), h - 1)
    xs = np.minimum(((np.arange(size) + 0.5) * w / size).astype(np.int64), w - 1)
    return img[ys][:, xs]


class CellGradEmbedder:
    """Grid of mean colors and gradient-orientation histograms ("dino-like")."""

    tag = "dino-like"

    def __init__(self, cells: int = 4, orientation_bins: int = 4):
        self.cells = cells
        self.orientation_bins = orientation_bins

    def __call__(self, image: np.ndarray) -> np.ndarray:
        img = _resize_nn(image.astype(np.float32), EMBED_SIZE)
        c = self.cells
        step = EMBED_SIZE // c
        blocks = img.reshape(c, step, c, step, 3)
        colors = blocks.mean(axis=(1, 3)).reshape(-1)

        gray = img.mean(axis=2)
        gx = np.zeros_like(gray)
        gy = np.zeros_like(gray)
        gx[:, 1:] = gray[:, 1:] - gray[:, :-1]
        gy[1:, :] = gray[1:, :] - gray[:-1, :]
        mag = np.hypot(gx, gy)
        ang = np.arctan2(gy, gx)
        bins = np.floor((ang + np.pi) / (2 * np.pi) * self.orientation_bins).astype(np.int64)
        bins = np.clip(bins, 0, self.orientation_bins - 1)

        hists = np.zeros((c, c, self.orientation_bins), dtype=np.float64)
        for b in range(self.orientation_bins):
            sel = np.where(bins == b, mag, 0.0)
            hists[:, :, b] = sel.reshape(c, step, c, step).sum(axis=(1, 3))
        total = hists.sum()
        if total > 0:
            hists = hists / total

        feat = np.concatenate([colors.astype(np.float64), hists.reshape(-1), [_BIAS]])
        return (feat / np.linalg.norm(feat)).astype(np.float32)


class HistProjEmbedder:
    """Randomly projected global color histogram ("clip-like")."""

    tag = "clip-like"

    def __init__(self, bins_per_channel: int = 4, out_dim: int = 64):
        self.bins_per_channel = bins_per_channel
        n_bins = bins_per_channel ** 3
        rng = np.random.default_rng(_PROJECTION_SEED)
        self._projection = rng.standard_normal((out_dim, n_bins)) / np.sqrt(n_bins)

    def __call__(self, image: np.ndarray) -> np.ndarray:
        img = _resize_nn(image.astype(np.float32), EMBED_SIZE)
        b = self.bins_per_channel
        idx = np.clip((img * b).astype(np.int64), 0, b - 1)
        flat = idx[:, :, 0] * b * b + idx[:, :, 1] * b + idx[:, :, 2]
        hist = np.bincount(flat.reshape(-1), minlength=b ** 3).astype(np.float64)
        hist = hist / hist.sum()
        feat = np.concatenate([self._projection @ hist, [_BIAS]])
        return (feat / np.linalg.norm(feat)).astype(np.float32)


def default_embedders() -> tuple[CellGradEmbedder, HistProjEmbedder]:
    return (CellGradEmbedder(), HistProjEmbedder())


def cosine_sim(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity clamped to [0, 1]; rejects zero vectors."""
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if u.shape != v.shape:
        raise ValueError(f"vector lengths differ: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity of a zero vector is undefined")
    sim = float(np.dot(u, v) / (nu * nv))
    return min(1.0, max(0.0, sim))


def split_regions(image: np.ndarray, mask) -> tuple[np.ndarray, np.ndarray]:
    """(subject crop, background with the subject blanked to mid-gray).

    The crop is the tight bbox of the mask, background pixels included;
    the background view keeps full geometry with masked pixels set to 0.5.
    """
    bits = mask.bits if isinstance(mask, Mask) else np.asarray(mask).astype(bool)
    if not bits.any():
        raise EmptyMaskError("cannot split on an empty mask")
    if bits.shape != image.shape[:2]:
        raise ValueError("mask dimensions do not match the image")
    box = bbox_of(bits)
    crop = image[box.y : box.y + box.h, box.x : box.x + box.w].copy()
    background = image.copy()
    background[bits] = 0.5
    return crop, background


@dataclass(frozen=True)
class AutoMetrics:
    """The four automatic similarity columns for one example."""

    dino_sub: float
    dino_back: float
    clipi_sub: float
    clipi_back: float

    def __post_init__(self):
        for name, v in self.as_dict().items():
            if not np.isfinite(v) or not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be finite in [0, 1], got {v}")

    def as_dict(self) -> dict[str, float]:
        return {"dino_sub": self.dino_sub, "dino_back": self.dino_back,
                "clipi_sub": self.clipi_sub, "clipi_back": self.clipi_back}

    def geomean(self) -> float:
        p = self.dino_sub * self.dino_back * self.clipi_sub * self.clipi_back
        return float(p ** 0.25)


@dataclass(frozen=True)
class HumanScores:
    """Three-aspect scores on the exact {0, 0.5, 1} scale."""

    subject: float
    background: float
    realistic: float

    def __post_init__(self):
        for name, v in [("subject", self.subject), ("background", self.background),
                        ("realistic", self.realistic)]:
            if v not in (0.0, 0.5, 1.0):
                raise ValueError(f"{name} must be one of 0, 0.5, 1; got {v}")


def score_example(
    generated: np.ndarray,
    subject: SubjectSet,
    source: np.ndarray,
    gen_mask,
    src_mask,
    embedders=None,
    exemplar_masks=None,
) -> AutoMetrics:
    """Score one edited image against its subject set and source scene."""
    if embedders is None:
        embedders = default_embedders()
    if exemplar_masks is None:
        exemplar_masks = [segment_subject(img, subject.class_label) for img in subject.images]
    if len(exemplar_masks) != len(subject.images):
        raise ValueError("need one exemplar mask per exemplar image")

    gen_crop, gen_back = split_regions(generated, gen_mask)
    _, src_back = split_regions(source, src_mask)
    exemplar_crops = [split_regions(img, m)[0] for img, m in zip(subject.images, exemplar_masks)]

    values = []
    for embed in embedders:
        gen_vec = embed(gen_crop)
        sub = float(np.mean([cosine_sim(gen_vec, embed(crop)) for crop in exemplar_crops]))
        back = cosine_sim(embed(gen_back), embed(src_back))
        values.extend([sub, back])
    return AutoMetrics(dino_sub=values[0], dino_back=values[1],
                       clipi_sub=values[2], clipi_back=values[3])


def overall_auto(per_example: list[AutoMetrics]) -> float:
    """Mean over examples of the four-way geometric mean."""
    if len(per_example) == 0:
        raise ValueError("overall_auto needs at least one example")
    return float(np.mean([m.geomean() for m in per_example]))


def overall_human(mean_subject: float, mean_background: float, mean_realistic: float) -> float:
    """Three-way geometric mean with exact zeros replaced by 0.001."""
    vals = []
    for v in (mean_subject, mean_background, mean_realistic):
        if not (0.0 <= v <= 1.0):
            raise ValueError(f"aspect means must be in [0, 1], got {v}")
        vals.append(0.001 if v == 0.0 else v)
    return float((vals[0] * vals[1] * vals[2]) ** (1.0 / 3.0))


def split_report(per_example: list[AutoMetrics], labels: list[str]) -> dict:
    """Per-split overall scores plus the easy-hard gap.

    A split with no examples is omitted from the report rather than scored
    zero; the gap is reported only when both splits are present.
    """
    if len(per_example) != len(labels):
        raise ValueError("need exactly one label per example")
    buckets: dict[str, list[AutoMetrics]] = {"easy": [], "hard": []}
    for metrics, label in zip(per_example, labels):
        if label not in buckets:
            raise ValueError(f"unlabeled result: expected easy|hard, got {label!r}")
        buckets[label].append(metrics)
    report: dict = {"splits": {}}
    for name, bucket in buckets.items():
        if bucket:
            report["splits"][name] = {
                "count": len(bucket),
                "overall": overall_auto(bucket),
                "columns": {
                    key: float(np.mean([m.as_dict()[key] for m in bucket]))
                    for key in ("dino_sub", "dino_back", "clipi_sub", "clipi_back")
                },
            }
    if "easy" in report["splits"] and "hard" in report["splits"]:
        report["gap"] = report["splits"]["easy"]["overall"] - report["splits"]["hard"]["overall"]
    return report
