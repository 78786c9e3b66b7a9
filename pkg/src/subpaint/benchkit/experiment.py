"""Experiment orchestration over a bench directory.

Runs one editing method across the selected tasks, scores every iteration
with both embedders, picks the best iteration per task by the overall
metric, and writes a machine report (canonical JSON, no timestamps) plus
an aligned-column text table. Per-task failures are recorded and score
zero in aggregates; only systemic problems raise.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..denoiser import (
    BACKDROP_ID,
    BACKDROP_WORD,
    SUBJECT_ID,
    SUBJECT_WORD,
    Denoiser,
    PromptTokens,
    TrainConfig,
    TrainExample,
    bind_token,
)
from ..editor import (
    EditConfig,
    EditRun,
    EditTask,
    IterationRecord,
    baseline_dreambooth,
    dream_edit,
    initialize_with_mask,
    save_run,
    select_best,
)
from ..errors import SubpaintError, UnboundTokenError
from ..evaluation import AutoMetrics, default_embedders, overall_auto, score_example, split_report
from ..images import canonical_json, derive_seed, round_floats, write_json
from ..masking import Mask, rect_mask, segment_subject
from ..sampler import encode_ratio
from ..schedules import NoiseSchedule, build_schedule
from .generate import BenchManifest

REPORT_SCHEMA_VERSION = 1
METHODS = ("dreamedit", "copypaste", "dreambooth")
COLUMNS = ("dino_sub", "dino_back", "clipi_sub", "clipi_back")

ZERO_METRICS = AutoMetrics(0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class ExperimentConfig:
    """Knobs shared by all methods plus the default schedule.

    The schedule endpoints default to the T=100 operating point used by
    the experiments (beta spacing scaled so alpha_bar reaches ~0 at T);
    build_schedule's own defaults stay untouched for callers that want
    them.
    """

    task_type: str = "replace"
    split: str = "both"
    limit_per_class: int | None = None
    iterations: int = 5
    dilation: int = 3
    r1: float = 0.8
    r_min: float = 0.1
    ratio_convention: str = "offset"
    guidance_scale: float = 2.0
    infill_ratio: float = 0.5
    schedule_family: str = "linear"
    timesteps: int = 100
    beta_start: float = 1e-3
    beta_end: float = 0.2
    seed: int = 0
    db_bind_steps: int = 200
    db_bind_lr: float = 1e-2
    save_images: bool = True

    def __post_init__(self):
        if self.task_type not in ("replace", "add", "both"):
            raise ValueError(f"task_type must be replace|add|both, got {self.task_type!r}")
        if self.split not in ("easy", "hard", "both"):
            raise ValueError(f"split must be easy|hard|both, got {self.split!r}")
        if self.limit_per_class is not None and self.limit_per_class < 1:
            raise ValueError("limit_per_class must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    def schedule(self) -> NoiseSchedule:
        return build_schedule(self.schedule_family, T=self.timesteps,
                              beta_start=self.beta_start, beta_end=self.beta_end)


def select_tasks(manifest: BenchManifest, config: ExperimentConfig) -> list[dict]:
    """Deterministic task subset: filter, sort by id, cap per class."""
    rows = [t for t in manifest.tasks
            if (config.task_type == "both" or t["kind"] == config.task_type)
            and (config.split == "both" or t["difficulty"] == config.split)]
    rows.sort(key=lambda t: t["task_id"])
    if config.limit_per_class is None:
        return rows
    kept: list[dict] = []
    seen: dict[tuple[str, str], int] = {}
    for t in rows:
        key = (t["kind"], t["class_label"])
        if seen.get(key, 0) < config.limit_per_class:
            kept.append(t)
            seen[key] = seen.get(key, 0) + 1
    return kept


def bound_model_path(models_dir, label: str) -> Path:
    return Path(models_dir) / f"bound_{label}.npz"


def load_bound_models(models_dir, labels) -> dict[str, Denoiser]:
    """Load one subject-bound model per class; verify the binding."""
    models = {}
    for label in sorted(set(labels)):
        path = bound_model_path(models_dir, label)
        if not path.exists():
            raise FileNotFoundError(f"no bound model for class {label!r} at {path}")
        model = Denoiser.load(path)
        if model.bound.get(SUBJECT_WORD) != label:
            raise UnboundTokenError(
                f"{path} is bound to {model.bound.get(SUBJECT_WORD)!r}, expected {label!r}")
        models[label] = model
    return models


def _edit_config(entry: dict, config: ExperimentConfig, method: str) -> EditConfig:
    task_seed = derive_seed(config.seed, entry["task_id"])
    if method == "dreamedit":
        init = "none" if entry["kind"] == "replace" else "infill"
        return EditConfig(iterations=config.iterations, dilation=config.dilation,
                          r1=config.r1, r_min=config.r_min,
                          ratio_convention=config.ratio_convention,
                          guidance_scale=config.guidance_scale, init_strategy=init,
                          infill_ratio=config.infill_ratio, segmenter="auto",
                          seed=task_seed)
    if method == "copypaste":
        return EditConfig(iterations=1, init_strategy="copy", seed=task_seed)
    return EditConfig(iterations=1, guidance_scale=config.guidance_scale, seed=task_seed)


def _run_copypaste(task: EditTask, subject, cfg: EditConfig) -> EditRun:
    run = EditRun(task=task, config=cfg, provenance={"method": "copypaste"})
    try:
        pasted, support = initialize_with_mask(task, subject, "copy")
    except SubpaintError as exc:
        run.failure = f"paste failed: {exc}"
        return run
    mask = Mask(support, provenance="paste")
    run.iterations.append(IterationRecord(index=1, input=task.source.copy(),
                                          mask=mask, dilated=mask, k=0, output=pasted))
    return run


def _run_dreambooth(task: EditTask, subject, model: Denoiser, cfg: EditConfig,
                    config: ExperimentConfig, schedule: NoiseSchedule) -> EditRun:
    run = EditRun(task=task, config=cfg, provenance={"method": "dreambooth"})
    try:
        bind_cfg = TrainConfig(steps=config.db_bind_steps, batch_size=4,
                               lr=config.db_bind_lr, cond_dropout=0.0,
                               freeze_trunk=True, train_rows=(BACKDROP_ID,),
                               seed=derive_seed(config.seed, task.task_id, "bind"))
        scene = TrainExample(image=task.source, tokens=PromptTokens((BACKDROP_ID,)))
        bound = bind_token(model, [scene], BACKDROP_WORD, task.task_id or "scene",
                           schedule, bind_cfg).model
        class_id = bound.vocab.id_of(task.class_label)
        prompt = PromptTokens((SUBJECT_ID, class_id, BACKDROP_ID))
        out = baseline_dreambooth(bound, prompt, schedule,
                                  seed=derive_seed(config.seed, task.task_id, "noise"),
                                  guidance_scale=cfg.guidance_scale)
        run.provenance["weight_hash"] = bound.weight_hash()
    except SubpaintError as exc:
        run.failure = f"generation failed: {exc}"
        return run
    h, w = task.source.shape[:2]
    mask = Mask(np.ones((h, w), dtype=bool), provenance="generated")
    run.iterations.append(IterationRecord(index=1, input=task.source.copy(),
                                          mask=mask, dilated=mask, k=schedule.T, output=out))
    return run


def scoring_masks(task: EditTask, output: np.ndarray) -> tuple[Mask, Mask]:
    """(generated-image mask, source-image mask) for region scoring.

    The generated subject is re-segmented; when segmentation misses, the
    fallback is the region the edit was asked to fill (source mask for
    replacement, the placement box for addition). The source mask is the
    oracle mask for replacement and the placement box for addition.
    """
    h, w = task.source.shape[:2]
    if task.kind == "replace":
        src = Mask(task.oracle_mask, provenance="oracle")
    else:
        src = rect_mask(h, w, task.bbox, provenance="bbox")
    try:
        gen = segment_subject(output, task.class_label)
    except SubpaintError:
        gen = src
    return gen, src


def _score_run(run: EditRun, subject, exemplar_masks) -> list[AutoMetrics]:
    scored = []
    for rec in run.iterations:
        gen_mask, src_mask = scoring_masks(run.task, rec.output)
        scored.append(score_example(rec.output, subject, run.task.source,
                                    gen_mask, src_mask, exemplar_masks=exemplar_masks))
    return scored


def _column_means(metrics: list[AutoMetrics]) -> dict:
    row = {key: float(np.mean([m.as_dict()[key] for m in metrics])) for key in COLUMNS}
    row["overall"] = overall_auto(metrics)
    return row


def run_experiment(manifest: BenchManifest, method: str, config: ExperimentConfig,
                   models_dir=None, out_dir=None) -> dict:
    """Execute `method` on the selected tasks and write report files.

    Returns the report dict. `models_dir` is required for dreamedit and
    dreambooth; copypaste needs no model. When `out_dir` is given, writes
    report.json, report.txt, and (if configured) per-task run directories
    beneath it. Bench inputs are never written to.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    schedule = config.schedule()
    entries = select_tasks(manifest, config)
    if not entries:
        raise ValueError("no tasks match the requested type/split filters")

    labels = [e["class_label"] for e in entries]
    models: dict[str, Denoiser] = {}
    if method in ("dreamedit", "dreambooth"):
        if models_dir is None:
            raise ValueError(f"{method} requires models_dir")
        models = load_bound_models(models_dir, labels)

    exemplar_masks: dict[str, list] = {}
    task_rows: list[dict] = []
    failures: list[dict] = []
    best_metrics: list[AutoMetrics] = []
    final_metrics: list[AutoMetrics] = []
    per_iter: list[list[AutoMetrics]] = [[] for _ in range(_iteration_count(method, config))]
    split_labels: list[str] = []

    for entry in entries:
        subject = manifest.subject_set(entry["class_label"])
        if entry["class_label"] not in exemplar_masks:
            exemplar_masks[entry["class_label"]] = [
                segment_subject(img, entry["class_label"]) for img in subject.images]
        task = manifest.edit_task(entry)
        cfg = _edit_config(entry, config, method)

        if method == "dreamedit":
            run = dream_edit(task, subject, models[entry["class_label"]], cfg, schedule)
        elif method == "copypaste":
            run = _run_copypaste(task, subject, cfg)
        else:
            run = _run_dreambooth(task, subject, models[entry["class_label"]],
                                  cfg, config, schedule)

        scored: list[AutoMetrics] = []
        if run.failure is None:
            try:
                scored = _score_run(run, subject, exemplar_masks[entry["class_label"]])
            except (SubpaintError, ValueError) as exc:
                run.failure = f"scoring failed: {exc}"

        row = {
            "task_id": entry["task_id"],
            "kind": entry["kind"],
            "class_label": entry["class_label"],
            "difficulty": entry["difficulty"],
            "failed": run.failure is not None,
            "failure": run.failure,
            "k_schedule": [rec.k for rec in run.iterations],
            "iterations": [
                {"iteration": rec.index, "k": rec.k, **m.as_dict(), "overall": m.geomean()}
                for rec, m in zip(run.iterations, scored)
            ],
        }
        if run.failure is None:
            best = select_best(run, [m.geomean() for m in scored])
            row["best_iteration"] = run.iterations[best].index
            row["best"] = {**scored[best].as_dict(), "overall": scored[best].geomean()}
            best_metrics.append(scored[best])
            final_metrics.append(scored[-1])
            for i, m in enumerate(scored):
                per_iter[i].append(m)
        else:
            row["best_iteration"] = None
            row["best"] = None
            failures.append({"task_id": entry["task_id"], "reason": run.failure})
            best_metrics.append(ZERO_METRICS)
            final_metrics.append(ZERO_METRICS)
            for bucket in per_iter:
                bucket.append(ZERO_METRICS)
        task_rows.append(row)
        split_labels.append(entry["difficulty"])

        if out_dir is not None and config.save_images:
            run_dir = Path(out_dir) / "runs" / entry["task_id"]
            save_run(run, run_dir)
            write_json(run_dir / "metrics.json", round_floats(row))

    iter_rows = []
    for i, bucket in enumerate(per_iter):
        iter_rows.append({"iteration": i + 1, "k": _iteration_k(method, config, schedule, i + 1),
                          **_column_means(bucket)})

    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "method": method,
        "bench": {"name": manifest.name, "seed": manifest.seed,
                  "image_size": manifest.image_size, "counts": manifest.counts},
        "config": config.to_dict(),
        "task_count": len(entries),
        "failed_count": len(failures),
        "tasks": task_rows,
        "aggregate": {
            "per_iteration": iter_rows,
            "best": _column_means(best_metrics),
            "final": _column_means(final_metrics),
            "splits": split_report(best_metrics, split_labels),
        },
        "failures": failures,
    }
    report = round_floats(report)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "report.json", report)
        (out / "report.txt").write_text(format_report(report))
    return report


def _iteration_count(method: str, config: ExperimentConfig) -> int:
    return config.iterations if method == "dreamedit" else 1


def _iteration_k(method: str, config: ExperimentConfig, schedule: NoiseSchedule, i: int) -> int:
    if method == "copypaste":
        return 0
    if method == "dreambooth":
        return schedule.T
    return encode_ratio(i, r1=config.r1, T=schedule.T, r_min=config.r_min,
                        convention=config.ratio_convention)


def _table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[j]) for r in rows)) if rows else len(h)
              for j, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(widths[j]) for j, h in enumerate(headers)).rstrip()]
    for r in rows:
        lines.append("  ".join(c.ljust(widths[j]) for j, c in enumerate(r)).rstrip())
    return "\n".join(lines)


def _fmt(v: float) -> str:
    return f"{v:.4f}"


def format_split_table(splits: dict) -> str:
    """Aligned easy/hard table from a split_report dict."""
    headers = ["split", "count"] + list(COLUMNS) + ["overall"]
    rows = []
    for name in ("easy", "hard"):
        if name in splits.get("splits", {}):
            s = splits["splits"][name]
            rows.append([name, str(s["count"])]
                        + [_fmt(s["columns"][c]) for c in COLUMNS]
                        + [_fmt(s["overall"])])
    text = _table(headers, rows)
    if "gap" in splits:
        text += f"\ngap (easy - hard): {_fmt(splits['gap'])}"
    return text


def format_report(report: dict) -> str:
    """Human-readable text rendering of a report dict."""
    agg = report["aggregate"]
    lines = [
        f"method: {report['method']}   bench: {report['bench']['name']}   "
        f"tasks: {report['task_count']}   failed: {report['failed_count']}",
        "",
        "per-iteration means (failed tasks score zero):",
    ]
    headers = ["iter", "k"] + list(COLUMNS) + ["overall"]
    rows = [[str(r["iteration"]), str(r["k"])]
            + [_fmt(r[c]) for c in COLUMNS] + [_fmt(r["overall"])]
            for r in agg["per_iteration"]]
    for name in ("best", "final"):
        rows.append([name, "-"] + [_fmt(agg[name][c]) for c in COLUMNS]
                    + [_fmt(agg[name]["overall"])])
    lines.append(_table(headers, rows))
    lines.append("")
    lines.append("splits (best iteration per task):")
    lines.append(format_split_table(agg["splits"]))
    if report["failures"]:
        lines.append("")
        lines.append("failures:")
        for f in report["failures"]:
            lines.append(f"  {f['task_id']}: {f['reason']}")
    lines.append("")
    return "\n".join(lines)


def report_json_bytes(report: dict) -> bytes:
    """Canonical serialized form, byte-stable across runs."""
    return canonical_json(report).encode("utf-8")
