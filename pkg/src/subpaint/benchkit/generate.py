"""Benchmark generation: subject sets, tasks, difficulty, training corpus.

A bench directory holds a manifest, per-class exemplar images, and per-task
source scenes with ground-truth masks (replacement) or placement boxes
(addition). Everything derives from one seed through per-item hashed
streams, so regenerating with the same config is bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..denoiser import (
    SUBJECT_ID,
    PromptTokens,
    SubjectSet,
    TrainExample,
    default_vocabulary,
)
from ..editor import EditTask
from ..images import derive_seed, load_mask_png, load_png, read_json, save_mask_png, save_png, write_json
from ..masking import Bbox, segment_subject
from .scenes import (
    BAND_HEIGHT,
    CLASS_ORDER,
    CLASS_SPECS,
    SHAPES,
    TEXTURES,
    SceneSpec,
    color_word_for_hue,
    hue_distance,
    render_scene,
    rgb_to_hue,
)

MANIFEST_SCHEMA_VERSION = 1
HUE_THRESHOLD = 60.0

SUBJECT_SAT = 0.8
SUBJECT_VAL = 0.9


@dataclass(frozen=True)
class BenchConfig:
    name: str = "toy"
    classes: int = 8
    tasks_per_class: int = 10
    exemplars: int = 5
    image_size: int = 64
    seed: int = 11
    hard_frac: float = 0.35
    scale_min: int = 8
    scale_max: int = 12

    def __post_init__(self):
        if not (1 <= self.classes <= len(CLASS_ORDER)):
            raise ValueError(f"classes must be 1..{len(CLASS_ORDER)}")
        if self.tasks_per_class < 1 or self.exemplars < 1:
            raise ValueError("counts must be >= 1")
        if self.image_size < 2 * (self.scale_max + 4):
            raise ValueError(
                f"image size {self.image_size} too small for subjects up to scale {self.scale_max}")
        # Band-contact placements put a box of side 2*scale+2 directly above
        # a band whose top row is at least 2/3 down the image.
        if self.image_size * 2 // 3 < 2 * self.scale_max + 3:
            raise ValueError(
                f"image size {self.image_size} leaves no room above a support band "
                f"for subjects up to scale {self.scale_max}")


def measured_subject_hue(subject: SubjectSet) -> float:
    """Mean hue of exemplar 0's subject pixels (shading preserves hue)."""
    mask = segment_subject(subject.images[0], subject.class_label)
    mean_rgb = subject.images[0][mask.bits].mean(axis=0)
    return rgb_to_hue(mean_rgb)


def assign_difficulty(task: SceneSpec, subject, hue_threshold: float = HUE_THRESHOLD) -> str:
    """Label a task easy or hard from its features.

    Replacement: hard iff the source subject's hue is farther than the
    threshold from the target subject's, or the shapes differ. Addition:
    hard iff the box is flush on a support band (contact) or the task
    carries an unusual-viewpoint tag. `subject` may be a SubjectSet (target
    hue measured from exemplar 0) or the target's SceneSpec.
    """
    if isinstance(subject, SceneSpec):
        target_label, target_hue = subject.class_label, subject.hue
    else:
        target_label, target_hue = subject.class_label, measured_subject_hue(subject)
    if task.class_label != target_label:
        raise ValueError(f"class mismatch: task {task.class_label!r} vs subject {target_label!r}")
    target_shape = CLASS_SPECS[task.class_label][0]

    if task.has_subject:
        if task.shape != target_shape:
            return "hard"
        return "hard" if hue_distance(task.hue, target_hue) > hue_threshold else "easy"

    if task.view_tag == "tilted":
        return "hard"
    if task.band and task.bbox is not None and task.bbox[1] + task.bbox[3] == task.band_y:
        return "hard"
    return "easy"


def _background_fields(rng: np.random.Generator) -> dict:
    return {
        "texture": TEXTURES[rng.integers(len(TEXTURES))],
        "bg_hue": float(rng.uniform(0.0, 360.0)),
        "bg_sat": float(rng.uniform(0.0, 0.12)),
        "bg_val": float(rng.uniform(0.3, 0.8)),
        "speckle_seed": int(rng.integers(2**31)),
    }


def _subject_placement(rng: np.random.Generator, config: BenchConfig) -> tuple[int, int, int]:
    scale = int(rng.integers(config.scale_min, config.scale_max + 1))
    margin = scale + 3
    cx = int(rng.integers(margin, config.image_size - margin))
    cy = int(rng.integers(margin, config.image_size - margin))
    return scale, cx, cy


def _hard_counts(config: BenchConfig, class_index: int) -> int:
    exact = config.hard_frac * config.tasks_per_class
    return int(round(exact)) if class_index % 2 == 0 else int(np.floor(exact))


def _target_spec(label: str, config: BenchConfig) -> SceneSpec:
    shape, base_hue = CLASS_SPECS[label]
    rng = np.random.default_rng(derive_seed(config.seed, "target", label))
    hue = float((base_hue + rng.uniform(-8.0, 8.0)) % 360.0)
    return SceneSpec(class_label=label, hue=hue, sat=SUBJECT_SAT, val=SUBJECT_VAL,
                     shape=shape, scale=10, cx=config.image_size // 2,
                     cy=config.image_size // 2, texture="flat",
                     bg_hue=0.0, bg_sat=0.0, bg_val=0.5)


def _exemplar_spec(label: str, target: SceneSpec, k: int, config: BenchConfig) -> SceneSpec:
    rng = np.random.default_rng(derive_seed(config.seed, "exemplar", label, str(k)))
    scale, cx, cy = _subject_placement(rng, config)
    return SceneSpec(class_label=label, hue=target.hue, sat=SUBJECT_SAT, val=SUBJECT_VAL,
                     shape=target.shape, scale=scale, cx=cx, cy=cy,
                     **_background_fields(rng))


def _replace_spec(label: str, target: SceneSpec, j: int, hard: bool, config: BenchConfig) -> SceneSpec:
    rng = np.random.default_rng(derive_seed(config.seed, "replace", label, str(j)))
    scale, cx, cy = _subject_placement(rng, config)
    shape = target.shape
    if hard and rng.random() < 0.3:
        others = [s for s in SHAPES if s != target.shape]
        shape = others[int(rng.integers(len(others)))]
        hue = float((target.hue + rng.uniform(-40.0, 40.0)) % 360.0)
    elif hard:
        sign = 1.0 if rng.random() < 0.5 else -1.0
        hue = float((target.hue + sign * rng.uniform(75.0, 180.0)) % 360.0)
    else:
        hue = float((target.hue + rng.uniform(-40.0, 40.0)) % 360.0)
    return SceneSpec(class_label=label, hue=hue, sat=SUBJECT_SAT, val=SUBJECT_VAL,
                     shape=shape, scale=scale, cx=cx, cy=cy,
                     **_background_fields(rng))


def _add_spec(label: str, target: SceneSpec, j: int, hard: bool, config: BenchConfig) -> SceneSpec:
    rng = np.random.default_rng(derive_seed(config.seed, "add", label, str(j)))
    scale = int(rng.integers(config.scale_min, config.scale_max + 1))
    bw = bh = 2 * scale + 2
    size = config.image_size
    band = False
    band_y = 0
    view = "front"
    if hard and rng.random() < 0.7:
        band = True
        band_y = int(rng.integers(size * 2 // 3, size - BAND_HEIGHT - 1))
        by = band_y - bh
        bx = int(rng.integers(1, size - bw - 1))
    else:
        if hard:
            view = "tilted"
        bx = int(rng.integers(1, size - bw - 1))
        by = int(rng.integers(1, max(2, size // 2 - bh)))
    return SceneSpec(class_label=label, hue=target.hue, sat=SUBJECT_SAT, val=SUBJECT_VAL,
                     shape=target.shape, scale=scale, cx=bx + bw // 2, cy=by + bh // 2,
                     has_subject=False, band=band, band_y=band_y, view_tag=view,
                     bbox=(bx, by, bw, bh), **_background_fields(rng))


@dataclass
class BenchManifest:
    """In-memory view of a bench directory's manifest."""

    name: str
    seed: int
    image_size: int
    classes: dict[str, dict]
    tasks: list[dict]
    counts: dict[str, int]
    root: Path | None = None
    _subject_cache: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "name": self.name,
            "seed": self.seed,
            "image_size": self.image_size,
            "classes": self.classes,
            "tasks": self.tasks,
            "counts": self.counts,
        }

    @classmethod
    def from_dict(cls, d: dict, root: Path | None = None) -> "BenchManifest":
        if d.get("schema_version") != MANIFEST_SCHEMA_VERSION:
            raise ValueError(f"unsupported manifest schema {d.get('schema_version')}")
        m = cls(name=d["name"], seed=d["seed"], image_size=d["image_size"],
                classes=d["classes"], tasks=d["tasks"], counts=d["counts"], root=root)
        m.validate()
        return m

    def validate(self) -> None:
        for task in self.tasks:
            if task["class_label"] not in self.classes:
                raise ValueError(f"task {task['task_id']} references unknown class")
            if task["kind"] == "add" and task.get("bbox") is None:
                raise ValueError(f"addition task {task['task_id']} lacks a bbox")
        n_split = sum(1 for t in self.tasks if t["difficulty"] in ("easy", "hard"))
        if n_split != len(self.tasks):
            raise ValueError("every task needs an easy/hard label")

    def _path(self, rel: str) -> Path:
        if self.root is None:
            raise ValueError("manifest is not attached to a directory")
        return self.root / rel

    def subject_set(self, label: str) -> SubjectSet:
        if label not in self._subject_cache:
            entry = self.classes[label]
            images = tuple(load_png(self._path(p)) for p in entry["exemplars"])
            prompts = tuple(PromptTokens(tuple(ids)) for ids in entry["prompts"])
            self._subject_cache[label] = SubjectSet(class_label=label, images=images, prompts=prompts)
        return self._subject_cache[label]

    def target_spec(self, label: str) -> SceneSpec:
        return SceneSpec.from_dict(self.classes[label]["target_spec"])

    def edit_task(self, task: dict) -> EditTask:
        source = load_png(self._path(task["source"]))
        oracle = load_mask_png(self._path(task["mask"])) if task.get("mask") else None
        bbox = Bbox(*task["bbox"]) if task.get("bbox") else None
        return EditTask(kind=task["kind"], source=source, class_label=task["class_label"],
                        target_prompt=PromptTokens(tuple(task["prompt"])), bbox=bbox,
                        oracle_mask=oracle, task_id=task["task_id"])


def generate_bench(config: BenchConfig, out_dir) -> BenchManifest:
    """Write a full bench directory; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vocab = default_vocabulary()
    size = config.image_size
    labels = CLASS_ORDER[: config.classes]

    classes: dict[str, dict] = {}
    tasks: list[dict] = []
    counts = {"replace": 0, "add": 0, "easy": 0, "hard": 0}

    for ci, label in enumerate(labels):
        target = _target_spec(label, config)
        class_id = vocab.id_of(label)
        subject_prompt = [SUBJECT_ID, class_id]

        exemplar_paths = []
        for k in range(config.exemplars):
            spec = _exemplar_spec(label, target, k, config)
            img, _ = render_scene(spec, size)
            rel = f"subjects/{label}/ex_{k}.png"
            (out / "subjects" / label).mkdir(parents=True, exist_ok=True)
            save_png(out / rel, img)
            exemplar_paths.append(rel)

        classes[label] = {
            "shape": target.shape,
            "target_spec": target.to_dict(),
            "exemplars": exemplar_paths,
            "prompts": [list(subject_prompt) for _ in range(config.exemplars)],
        }

        n = config.tasks_per_class
        hard_n = _hard_counts(config, ci)
        for kind in ("replace", "add"):
            rng_split = np.random.default_rng(derive_seed(config.seed, "split", kind, label))
            hard_idx = set(rng_split.choice(n, size=min(hard_n, n), replace=False).tolist())
            for j in range(n):
                hard = j in hard_idx
                task_id = f"{kind}-{label}-{j:02d}"
                task_dir = out / "tasks" / task_id
                task_dir.mkdir(parents=True, exist_ok=True)
                if kind == "replace":
                    spec = _replace_spec(label, target, j, hard, config)
                    img, mask = render_scene(spec, size)
                    save_png(task_dir / "source.png", img)
                    save_mask_png(task_dir / "mask.png", mask)
                    entry = {"mask": f"tasks/{task_id}/mask.png", "bbox": None}
                else:
                    spec = _add_spec(label, target, j, hard, config)
                    img, _ = render_scene(spec, size)
                    save_png(task_dir / "source.png", img)
                    write_json(task_dir / "bbox.json", list(spec.bbox))
                    entry = {"mask": None, "bbox": list(spec.bbox)}

                difficulty = assign_difficulty(spec, target)
                if difficulty != ("hard" if hard else "easy"):
                    raise RuntimeError(
                        f"generator margins violated for {task_id}: intended "
                        f"{'hard' if hard else 'easy'}, assigned {difficulty}")
                spec = SceneSpec.from_dict({**spec.to_dict(), "difficulty": difficulty})

                tasks.append({
                    "task_id": task_id,
                    "kind": kind,
                    "class_label": label,
                    "difficulty": difficulty,
                    "prompt": list(subject_prompt),
                    "source": f"tasks/{task_id}/source.png",
                    "scene": spec.to_dict(),
                    **entry,
                })
                counts[kind] += 1
                counts[difficulty] += 1

    manifest = BenchManifest(name=config.name, seed=config.seed, image_size=size,
                             classes=classes, tasks=tasks, counts=counts, root=out)
    manifest.validate()
    write_json(out / "manifest.json", manifest.to_dict())
    return manifest


def load_bench(bench_dir) -> BenchManifest:
    root = Path(bench_dir)
    return BenchManifest.from_dict(read_json(root / "manifest.json"), root=root)


def training_scenes(count: int, size: int, seed: int) -> list[TrainExample]:
    """Random labeled scenes for base training; prompts name class, color,
    and shape so the conditioning pathway learns all three."""
    if count < 1:
        raise ValueError("need at least one training scene")
    if size < 32:
        raise ValueError("training scenes need size >= 32")
    vocab = default_vocabulary()
    examples = []
    for i in range(count):
        rng = np.random.default_rng(derive_seed(seed, "train-scene", str(i)))
        label = CLASS_ORDER[int(rng.integers(len(CLASS_ORDER)))]
        shape, base_hue = CLASS_SPECS[label]
        hue = float((base_hue + rng.uniform(-30.0, 30.0)) % 360.0)
        scale = int(rng.integers(7, max(8, size // 5)))
        margin = scale + 3
        cx = int(rng.integers(margin, size - margin))
        cy = int(rng.integers(margin, size - margin))
        spec = SceneSpec(class_label=label, hue=hue, sat=SUBJECT_SAT, val=SUBJECT_VAL,
                         shape=shape, scale=scale, cx=cx, cy=cy,
                         **_background_fields(rng))
        img, _ = render_scene(spec, size)
        tokens = vocab.encode([label, color_word_for_hue(hue), shape])
        examples.append(TrainExample(image=img, tokens=tokens))
    return examples
