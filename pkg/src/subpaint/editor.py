"""The iterative subject-editing engine and its in-scope baselines.

An edit run repeats N times: segment the current subject, dilate the mask,
invert the image partway up the schedule under the null condition, then
sample back down conditioned on the target prompt while splicing the
recorded inversion states back in outside the dilated mask. The splice
happens in pixel space, so everything outside the dilated mask survives
each iteration exactly, and the encode depth shrinks every round so late
iterations refine rather than repaint.

Iteration boundaries use images in [0, 1]; conversion to the model's
[-1, 1] domain happens inside the inpaint step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .denoiser import SUBJECT_ID, BACKDROP_ID, SUBJECT_WORD, BACKDROP_WORD, Denoiser, PromptTokens, SubjectSet
from .errors import SubjectNotFoundError, SubpaintError, UnboundTokenError
from .images import from_model, save_mask_png, save_png, to_model, write_json
from .masking import Bbox, ColorSegmenter, Mask, OracleSegmenter, bbox_of, copy_paste, dilate, paste_support, rect_mask, segment_subject
from .sampler import _guided_eps, _retarget, ddim_encode, ddim_sample, encode_ratio
from .schedules import NoiseSchedule

KINDS = ("replace", "add")
INIT_STRATEGIES = ("none", "copy", "infill")


@dataclass(frozen=True)
class EditTask:
    """One editing problem: a source scene and a target-subject prompt."""

    kind: str
    source: np.ndarray
    class_label: str
    target_prompt: PromptTokens
    bbox: Bbox | None = None
    oracle_mask: np.ndarray | None = None
    task_id: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"task kind must be one of {KINDS}, got {self.kind!r}")
        if self.source.ndim != 3 or self.source.shape[2] != 3:
            raise ValueError(f"source must be (H, W, 3), got {self.source.shape}")
        if self.kind == "add":
            if self.bbox is None:
                raise ValueError("addition tasks require a bbox")
            if not self.bbox.inside(self.source.shape[0], self.source.shape[1]):
                raise ValueError("bbox falls outside the source image")
        elif self.bbox is not None:
            raise ValueError("replacement tasks carry no bbox")
        if self.target_prompt.count(SUBJECT_ID) < 1:
            raise ValueError("target prompt must mention the subject token")


@dataclass(frozen=True)
class EditConfig:
    iterations: int = 5
    dilation: int = 3
    r1: float = 0.8
    r_min: float = 0.1
    ratio_convention: str = "offset"
    guidance_scale: float = 2.0
    init_strategy: str = "none"
    copy_exemplar: int = 0
    infill_ratio: float = 0.5
    segmenter: str = "auto"
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"need at least one iteration, got {self.iterations}")
        if not (0.0 < self.r1 <= 1.0):
            raise ValueError(f"r1 must be in (0, 1], got {self.r1}")
        if self.init_strategy not in INIT_STRATEGIES:
            raise ValueError(f"unknown init strategy {self.init_strategy!r}")
        if self.segmenter not in ("auto", "color"):
            raise ValueError(f"segmenter must be auto or color, got {self.segmenter!r}")
        if self.guidance_scale < 0:
            raise ValueError("guidance scale must be >= 0")


@dataclass(frozen=True)
class IterationRecord:
    index: int
    input: np.ndarray
    mask: Mask
    dilated: Mask
    k: int
    output: np.ndarray

    def __post_init__(self):
        if self.output.shape != self.input.shape:
            raise ValueError("iteration output shape differs from input")
        if np.any(self.mask.bits & ~self.dilated.bits):
            raise ValueError("dilated mask must contain the mask")


@dataclass
class EditRun:
    task: EditTask
    config: EditConfig
    iterations: list[IterationRecord] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    failure: str | None = None

    @property
    def final_image(self) -> np.ndarray:
        if not self.iterations:
            raise SubpaintError(f"run has no completed iterations ({self.failure})")
        return self.iterations[-1].output


def _strategy_for(task: EditTask, strategy: str) -> None:
    if strategy == "none" and task.kind != "replace":
        raise ValueError("the identity initialization applies to replacement tasks only")
    if strategy == "infill" and task.kind != "add":
        raise ValueError("exemplar infill applies to addition tasks only")


def _source_mask(task: EditTask) -> Mask:
    if task.oracle_mask is not None:
        return segment_subject(task.source, task.class_label, OracleSegmenter(task.oracle_mask))
    return segment_subject(task.source, task.class_label)


def _exemplar_mask(subject: SubjectSet, index: int) -> Mask:
    if not (0 <= index < len(subject.images)):
        raise ValueError(f"exemplar index {index} out of range (K={len(subject.images)})")
    return segment_subject(subject.images[index], subject.class_label)


def _mean_exemplar(subject: SubjectSet, box: Bbox) -> tuple[np.ndarray, np.ndarray]:
    """Average the exemplar subjects, resized onto the bbox grid."""
    from .masking import _nn_indices  # shared resize convention

    crops = []
    masks = []
    for img in subject.images:
        m = segment_subject(img, subject.class_label)
        b = bbox_of(m)
        crop = img[b.y : b.y + b.h, b.x : b.x + b.w]
        mbits = m.bits[b.y : b.y + b.h, b.x : b.x + b.w]
        ys = _nn_indices(b.h, box.h)
        xs = _nn_indices(b.w, box.w)
        crops.append(crop[ys][:, xs])
        masks.append(mbits[ys][:, xs])
    mean_img = np.mean(np.stack(crops), axis=0).astype(np.float32)
    votes = np.sum(np.stack(masks), axis=0)
    support = votes * 2 >= len(subject.images)
    return mean_img, support


def initialize_with_mask(
    task: EditTask,
    subject: SubjectSet,
    strategy: str,
    model: Denoiser | None = None,
    schedule: NoiseSchedule | None = None,
    config: EditConfig | None = None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """First-iteration image plus, when known exactly, its subject support.

    The support is what the initializer itself wrote (or the task's stored
    ground truth), handed to iteration 1 as an oracle mask.
    """
    _strategy_for(task, strategy)
    config = config or EditConfig(init_strategy=strategy)
    h, w = task.source.shape[:2]

    if strategy == "none":
        bits = task.oracle_mask.astype(bool).copy() if task.oracle_mask is not None else None
        return task.source.copy(), bits

    if strategy == "copy":
        ex_mask = _exemplar_mask(subject, config.copy_exemplar)
        ex_img = subject.images[config.copy_exemplar]
        if task.kind == "replace":
            src_mask = _source_mask(task)
            region = bbox_of(src_mask)
            support = src_mask.bits | paste_support(h, w, region, ex_mask)
        else:
            region = task.bbox
            support = paste_support(h, w, region, ex_mask)
        return copy_paste(task.source, region, ex_img, ex_mask), support

    # infill: paste the class-mean subject, then one confined pass under the
    # class word (not the subject token) to settle it into the scene
    if model is None or schedule is None:
        raise ValueError("exemplar infill needs a model and a schedule")
    mean_img, mean_support = _mean_exemplar(subject, task.bbox)
    pasted = task.source.copy()
    window = pasted[task.bbox.y : task.bbox.y + task.bbox.h, task.bbox.x : task.bbox.x + task.bbox.w]
    window[mean_support] = mean_img[mean_support]

    class_prompt = PromptTokens((model.vocab.id_of(task.class_label),))
    box_mask = dilate(rect_mask(h, w, task.bbox), config.dilation)
    k = max(1, min(schedule.T, int(round(config.infill_ratio * schedule.T))))
    settled = inpaint_once(model, pasted, box_mask, class_prompt, k, schedule, config.guidance_scale)
    support = np.zeros((h, w), dtype=bool)
    support[task.bbox.y : task.bbox.y + task.bbox.h, task.bbox.x : task.bbox.x + task.bbox.w] = mean_support
    return settled, support


def initialize(task: EditTask, subject: SubjectSet, strategy: str,
               model: Denoiser | None = None, schedule: NoiseSchedule | None = None,
               config: EditConfig | None = None) -> np.ndarray:
    """First-iteration image x per the chosen strategy."""
    return initialize_with_mask(task, subject, strategy, model, schedule, config)[0]


def blend_latents(x_t: np.ndarray, z_t: np.ndarray, dilated_mask) -> np.ndarray:
    """Keep z inside the dilated mask, the recorded x outside it."""
    bits = dilated_mask.bits if isinstance(dilated_mask, Mask) else np.asarray(dilated_mask).astype(bool)
    if x_t.shape != z_t.shape or bits.shape != x_t.shape[:2]:
        raise ValueError(f"blend shapes disagree: {x_t.shape}, {z_t.shape}, mask {bits.shape}")
    return np.where(bits[:, :, None], z_t, x_t)


def inpaint_once(model, x0_img: np.ndarray, dilated_mask: Mask, prompt: PromptTokens,
                 k: int, schedule: NoiseSchedule, guidance_scale: float = 2.0,
                 trajectory_hook=None) -> np.ndarray:
    """One masked regeneration pass at encode depth k.

    Encodes under the null condition recording every state, then samples
    back conditioned on the prompt, splicing the recorded state back in
    outside the mask after every step. The final splice happens at t=0
    against the input itself, so the output equals the input exactly
    outside the dilated mask. `trajectory_hook(phase, t, z)` is called with
    every encode and decode state for debugging dumps.
    """
    if not (0 < k <= schedule.T):
        raise ValueError(f"encode depth must be in (0, {schedule.T}], got {k}")
    bits = dilated_mask.bits if isinstance(dilated_mask, Mask) else np.asarray(dilated_mask).astype(bool)
    if bits.shape != x0_img.shape[:2]:
        raise ValueError("mask dimensions do not match the image")

    x0 = to_model(x0_img)
    traj = ddim_encode(model, x0, k, schedule, cond=None)
    cond = model.encode_prompt(prompt)
    null_cond = model.null_condition()
    ab = schedule.alpha_bar
    if trajectory_hook is not None:
        for t, state in enumerate(traj.states):
            trajectory_hook("encode", t, state)

    z = traj.states[k]
    for t in range(k, 0, -1):
        eps = _guided_eps(model, z, t, cond, null_cond, guidance_scale)
        z = _retarget(z, eps, ab[t], ab[t - 1])
        z = blend_latents(traj.states[t - 1], z, bits)
        if trajectory_hook is not None:
            trajectory_hook("decode", t - 1, z)
    return from_model(np.clip(z, -1.0, 1.0))


def _segment_iteration(task: EditTask, x: np.ndarray, i: int, config: EditConfig,
                       init_support: np.ndarray | None) -> Mask:
    if i == 1 and config.segmenter == "auto" and init_support is not None:
        return Mask(init_support, provenance="oracle")
    return segment_subject(x, task.class_label, ColorSegmenter())


def dream_edit(task: EditTask, subject: SubjectSet, model: Denoiser,
               config: EditConfig, schedule: NoiseSchedule,
               trajectory_hook=None) -> EditRun:
    """Run the full N-iteration edit loop.

    Iteration i re-segments the current image, dilates, and inpaints at the
    depth given by the decreasing ratio schedule. Domain errors mark the
    run failed and return the partial record; a segmentation miss after the
    first iteration instead reuses the previous dilated mask.
    `trajectory_hook(iteration, phase, t, z)` receives every diffusion
    state when provided.
    """
    if model.bound.get(SUBJECT_WORD) != subject.class_label:
        raise UnboundTokenError(
            f"model is bound to {model.bound.get(SUBJECT_WORD)!r}, task needs {subject.class_label!r}")
    _strategy_for(task, config.init_strategy)

    run = EditRun(task=task, config=config, provenance={
        "weight_hash": model.weight_hash(),
        "train_steps": model.train_steps,
        "bound": dict(model.bound),
        "schedule": {"family": schedule.family, "T": schedule.T},
        "seed": config.seed,
        "notes": [],
    })

    try:
        x, init_support = initialize_with_mask(
            task, subject, config.init_strategy, model, schedule, config)
    except SubpaintError as exc:
        run.failure = f"initialization failed: {exc}"
        return run

    prev_dilated: Mask | None = None
    for i in range(1, config.iterations + 1):
        try:
            mask = _segment_iteration(task, x, i, config, init_support)
            dilated = dilate(mask, config.dilation)
        except SubjectNotFoundError as exc:
            if prev_dilated is None:
                run.failure = f"segmentation failed at iteration {i}: {exc}"
                return run
            mask = Mask(prev_dilated.bits, provenance="reused-previous")
            dilated = mask
            run.provenance["notes"].append(f"iteration {i}: reused previous dilated mask")
        except SubpaintError as exc:
            run.failure = f"iteration {i} failed: {exc}"
            return run

        k = encode_ratio(i, r1=config.r1, T=schedule.T, r_min=config.r_min,
                         convention=config.ratio_convention)
        hook = None
        if trajectory_hook is not None:
            hook = lambda phase, t, z, _i=i: trajectory_hook(_i, phase, t, z)
        try:
            out = inpaint_once(model, x, dilated, task.target_prompt, k,
                               schedule, config.guidance_scale, trajectory_hook=hook)
        except SubpaintError as exc:
            run.failure = f"iteration {i} failed: {exc}"
            return run

        run.iterations.append(IterationRecord(index=i, input=x, mask=mask,
                                              dilated=dilated, k=k, output=out))
        prev_dilated = dilated
        x = out
    return run


def select_best(run: EditRun, scores) -> int:
    """0-based index of the best-scoring iteration; ties go to the earliest."""
    scores = list(scores)
    if len(scores) != len(run.iterations):
        raise ValueError(f"need one score per iteration: {len(scores)} vs {len(run.iterations)}")
    if not scores:
        raise ValueError("run has no iterations to select from")
    return int(np.argmax(scores))


def baseline_dreambooth(model: Denoiser, prompt: PromptTokens, schedule: NoiseSchedule,
                        seed: int, guidance_scale: float = 2.0) -> np.ndarray:
    """Generate from pure noise under a dual-token prompt; no mask, no
    background guarantee."""
    for word, token_id in ((SUBJECT_WORD, SUBJECT_ID), (BACKDROP_WORD, BACKDROP_ID)):
        if word not in model.bound:
            raise UnboundTokenError(f"{word} is not bound on this model")
        if prompt.count(token_id) < 1:
            raise ValueError(f"baseline prompt must mention {word}")
    size = model.arch.image_size
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((size, size, 3)).astype(np.float32)
    out = ddim_sample(model, z, schedule.T, schedule,
                      cond=model.encode_prompt(prompt), guidance_scale=guidance_scale)
    return from_model(out)


def save_run(run: EditRun, out_dir) -> None:
    """Persist a run: manifest plus per-iteration PNGs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "task_id": run.task.task_id,
        "kind": run.task.kind,
        "class_label": run.task.class_label,
        "prompt": list(run.task.target_prompt.ids),
        "bbox": run.task.bbox.as_list() if run.task.bbox else None,
        "config": {
            "iterations": run.config.iterations,
            "dilation": run.config.dilation,
            "r1": run.config.r1,
            "r_min": run.config.r_min,
            "ratio_convention": run.config.ratio_convention,
            "guidance_scale": run.config.guidance_scale,
            "init_strategy": run.config.init_strategy,
            "segmenter": run.config.segmenter,
            "seed": run.config.seed,
        },
        "provenance": run.provenance,
        "failure": run.failure,
        "k_schedule": [rec.k for rec in run.iterations],
        "mask_provenance": [rec.mask.provenance for rec in run.iterations],
    }
    write_json(out / "manifest.json", manifest)
    for rec in run.iterations:
        stem = f"iter_{rec.index:02d}"
        save_png(out / f"{stem}_input.png", rec.input)
        save_png(out / f"{stem}_output.png", rec.output)
        save_mask_png(out / f"{stem}_mask.png", rec.mask.bits)
        save_mask_png(out / f"{stem}_dilated.png", rec.dilated.bits)
