"""Command-line entry points.

Subcommands: gen-bench, train-base, bind-subject, edit, run-experiment,
evaluate, report. The shared flags --seed, --config, and --out work on
every subcommand; --config names a JSON file whose keys (matching option
names with underscores) provide defaults that explicit flags override.

Exit codes: 0 on success, 1 when tasks failed (summarized on stderr),
2 on usage errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ..denoiser import (
    ArchConfig,
    Denoiser,
    SUBJECT_ID,
    SUBJECT_WORD,
    TrainConfig,
    bind_subject,
    train_base,
    default_vocabulary,
)
from ..editor import EditConfig, dream_edit, save_run
from ..errors import SubpaintError
from ..evaluation import overall_auto, score_example
from ..images import (
    canonical_json,
    derive_seed,
    from_model,
    load_png,
    read_json,
    round_floats,
    save_png,
    write_json,
)
from ..schedules import build_schedule
from .experiment import (
    ExperimentConfig,
    METHODS,
    _run_copypaste,
    _run_dreambooth,
    bound_model_path,
    format_report,
    format_split_table,
    run_experiment,
    scoring_masks,
)
from .generate import BenchConfig, generate_bench, load_bench, training_scenes


class UsageError(Exception):
    """Bad or missing arguments discovered after parsing."""


def _req(a: dict, key: str):
    if key not in a or a[key] is None:
        raise UsageError(f"missing required option --{key.replace('_', '-')}")
    return a[key]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master RNG seed")
    p.add_argument("--config", default=argparse.SUPPRESS,
                   help="JSON file of default option values")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output directory")


def _opt(p: argparse.ArgumentParser, name: str, **kw) -> None:
    p.add_argument(name, default=argparse.SUPPRESS, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subpaint", description="Subject-driven image editing toolbox.")
    _add_common(parser)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-bench", help="generate a benchmark directory")
    _add_common(g)
    _opt(g, "--name")
    _opt(g, "--classes", type=int)
    _opt(g, "--tasks-per-class", type=int)
    _opt(g, "--exemplars", type=int)
    _opt(g, "--image-size", type=int)
    _opt(g, "--hard-frac", type=float)

    t = sub.add_parser("train-base", help="train the base conditional denoiser")
    _add_common(t)
    _opt(t, "--steps", type=int)
    _opt(t, "--scenes", type=int)
    _opt(t, "--image-size", type=int)
    _opt(t, "--batch-size", type=int)
    _opt(t, "--lr", type=float)
    _add_schedule_opts(t)

    b = sub.add_parser("bind-subject", help="bind the subject token for one class or all")
    _add_common(b)
    _opt(b, "--bench")
    _opt(b, "--models")
    _opt(b, "--class", dest="class_label")
    _opt(b, "--steps", type=int)
    _opt(b, "--batch-size", type=int)
    _opt(b, "--lr", type=float)
    _add_schedule_opts(b)

    e = sub.add_parser("edit", help="run one editing task")
    _add_common(e)
    _opt(e, "--bench")
    _opt(e, "--models")
    _opt(e, "--task")
    _opt(e, "--method", choices=METHODS)
    _opt(e, "--iters", type=int)
    _opt(e, "--dilation", type=int)
    _opt(e, "--r1", type=float)
    _opt(e, "--r-min", type=float)
    _opt(e, "--guidance", type=float)
    e.add_argument("--dump-trajectory", action="store_true", default=argparse.SUPPRESS,
                   help="save every diffusion state as a PNG frame")
    _add_schedule_opts(e)

    r = sub.add_parser("run-experiment", help="run a method over the bench and write reports")
    _add_common(r)
    _opt(r, "--bench")
    _opt(r, "--models")
    _opt(r, "--method", choices=METHODS)
    _opt(r, "--task-type", choices=("replace", "add", "both"))
    _opt(r, "--split", choices=("easy", "hard", "both"))
    _opt(r, "--limit-per-class", type=int)
    _opt(r, "--iters", type=int)
    _opt(r, "--dilation", type=int)
    _opt(r, "--r1", type=float)
    _opt(r, "--r-min", type=float)
    _opt(r, "--guidance", type=float)
    _opt(r, "--db-bind-steps", type=int)
    _opt(r, "--db-bind-lr", type=float)
    r.add_argument("--no-images", action="store_true", default=argparse.SUPPRESS,
                   help="skip per-task image dumps")
    _add_schedule_opts(r)

    v = sub.add_parser("evaluate", help="re-score saved runs from disk")
    _add_common(v)
    _opt(v, "--runs")
    _opt(v, "--bench")

    p = sub.add_parser("report", help="render a report JSON as text")
    _add_common(p)
    p.add_argument("report_path", nargs="?", default=argparse.SUPPRESS,
                   help="path to a report.json")
    p.add_argument("--split", action="store_true", default=argparse.SUPPRESS,
                   help="print only the easy/hard split table")

    return parser


def _add_schedule_opts(p: argparse.ArgumentParser) -> None:
    _opt(p, "--family", choices=("linear", "cosine"))
    _opt(p, "--timesteps", type=int)
    _opt(p, "--beta-start", type=float)
    _opt(p, "--beta-end", type=float)


def _schedule_args(a: dict) -> dict:
    return {
        "schedule_family": a.get("family", "linear"),
        "timesteps": int(a.get("timesteps", 100)),
        "beta_start": float(a.get("beta_start", 1e-3)),
        "beta_end": float(a.get("beta_end", 0.2)),
    }


def _build_schedule(a: dict):
    s = _schedule_args(a)
    return build_schedule(s["schedule_family"], T=s["timesteps"],
                          beta_start=s["beta_start"], beta_end=s["beta_end"])


def cmd_gen_bench(a: dict) -> int:
    out = _req(a, "out")
    config = BenchConfig(
        name=a.get("name", "toy"),
        classes=int(a.get("classes", 8)),
        tasks_per_class=int(a.get("tasks_per_class", 10)),
        exemplars=int(a.get("exemplars", 5)),
        image_size=int(a.get("image_size", 64)),
        seed=int(a.get("seed", 11)),
        hard_frac=float(a.get("hard_frac", 0.35)),
        scale_min=int(a.get("scale_min", 8)),
        scale_max=int(a.get("scale_max", 12)),
    )
    manifest = generate_bench(config, out)
    print(f"bench {manifest.name!r}: {len(manifest.classes)} classes, "
          f"{len(manifest.tasks)} tasks ({manifest.counts}) -> {out}")
    return 0


def cmd_train_base(a: dict) -> int:
    out = Path(_req(a, "out"))
    seed = int(a.get("seed", 7))
    size = int(a.get("image_size", 64))
    scenes = training_scenes(int(a.get("scenes", 256)), size, derive_seed(seed, "scenes"))
    schedule = _build_schedule(a)
    vocab = default_vocabulary()
    init = Denoiser.initialize(ArchConfig(image_size=size, vocab_size=vocab.size),
                               vocab=vocab, seed=seed)
    config = TrainConfig(steps=int(a.get("steps", 2000)),
                         batch_size=int(a.get("batch_size", 8)),
                         lr=float(a.get("lr", 1e-3)), seed=seed)
    result = train_base(scenes, schedule, config, init=init)
    out.mkdir(parents=True, exist_ok=True)
    result.model.save(out / "base.npz")
    print(f"trained base model: {result.model.param_count()} params, "
          f"{config.steps} steps, loss {result.initial_loss:.4f} -> "
          f"{result.final_smoothed_loss:.4f} -> {out / 'base.npz'}")
    return 0


def cmd_bind_subject(a: dict) -> int:
    bench = load_bench(_req(a, "bench"))
    models_dir = Path(_req(a, "models"))
    out = Path(a.get("out", models_dir))
    seed = int(a.get("seed", 5))
    which = a.get("class_label", "all")
    labels = sorted(bench.classes) if which == "all" else [which]
    for label in labels:
        if label not in bench.classes:
            raise UsageError(f"bench has no class {label!r}")
    base = Denoiser.load(models_dir / "base.npz")
    schedule = _build_schedule(a)
    out.mkdir(parents=True, exist_ok=True)
    for label in labels:
        config = TrainConfig(steps=int(a.get("steps", 500)),
                             batch_size=int(a.get("batch_size", 4)),
                             lr=float(a.get("lr", 1e-2)),
                             cond_dropout=0.0, freeze_trunk=True,
                             train_rows=(SUBJECT_ID,),
                             seed=derive_seed(seed, "bind", label))
        result = bind_subject(base, bench.subject_set(label), schedule, config)
        path = bound_model_path(out, label)
        result.model.save(path)
        print(f"bound {SUBJECT_WORD} -> {label!r} "
              f"(loss {result.final_smoothed_loss:.4f}) -> {path}")
    return 0


def _trajectory_dumper(frames_dir: Path):
    frames_dir.mkdir(parents=True, exist_ok=True)

    def hook(iteration: int, phase: str, t: int, z: np.ndarray) -> None:
        img = from_model(np.clip(z, -1.0, 1.0))
        save_png(frames_dir / f"iter_{iteration:02d}_{phase}_t{t:03d}.png", img)

    return hook


def cmd_edit(a: dict) -> int:
    bench = load_bench(_req(a, "bench"))
    task_id = _req(a, "task")
    out = Path(_req(a, "out"))
    method = a.get("method", "dreamedit")
    entries = [t for t in bench.tasks if t["task_id"] == task_id]
    if not entries:
        raise UsageError(f"bench has no task {task_id!r}")
    entry = entries[0]
    task = bench.edit_task(entry)
    subject = bench.subject_set(entry["class_label"])
    seed = derive_seed(int(a.get("seed", 0)), task_id)
    schedule = _build_schedule(a)
    run_dir = out / "runs" / task_id

    if method == "dreamedit":
        model = Denoiser.load(bound_model_path(_req(a, "models"), entry["class_label"]))
        cfg = EditConfig(
            iterations=int(a.get("iters", 5)),
            dilation=int(a.get("dilation", 3)),
            r1=float(a.get("r1", 0.8)),
            r_min=float(a.get("r_min", 0.1)),
            guidance_scale=float(a.get("guidance", 2.0)),
            init_strategy="none" if entry["kind"] == "replace" else "infill",
            seed=seed,
        )
        hook = _trajectory_dumper(run_dir / "trajectory") if a.get("dump_trajectory") else None
        run = dream_edit(task, subject, model, cfg, schedule, trajectory_hook=hook)
    elif method == "copypaste":
        run = _run_copypaste(task, subject, EditConfig(iterations=1, init_strategy="copy", seed=seed))
    else:
        model = Denoiser.load(bound_model_path(_req(a, "models"), entry["class_label"]))
        exp = ExperimentConfig(seed=int(a.get("seed", 0)),
                               guidance_scale=float(a.get("guidance", 2.0)),
                               db_bind_steps=int(a.get("db_bind_steps", 200)),
                               **_schedule_args(a))
        run = _run_dreambooth(task, subject, model,
                              EditConfig(iterations=1, seed=seed), exp, schedule)

    save_run(run, run_dir)
    if run.failure is not None:
        print(f"task {task_id} failed: {run.failure}", file=sys.stderr)
        print("1 of 1 tasks failed", file=sys.stderr)
        return 1
    print(f"edited {task_id} with {method}: {len(run.iterations)} iterations -> {run_dir}")
    return 0


def cmd_run_experiment(a: dict) -> int:
    bench = load_bench(_req(a, "bench"))
    method = _req(a, "method")
    out = Path(_req(a, "out"))
    config = ExperimentConfig(
        task_type=a.get("task_type", "replace"),
        split=a.get("split", "both"),
        limit_per_class=int(a["limit_per_class"]) if a.get("limit_per_class") else None,
        iterations=int(a.get("iters", 5)),
        dilation=int(a.get("dilation", 3)),
        r1=float(a.get("r1", 0.8)),
        r_min=float(a.get("r_min", 0.1)),
        guidance_scale=float(a.get("guidance", 2.0)),
        seed=int(a.get("seed", 0)),
        db_bind_steps=int(a.get("db_bind_steps", 200)),
        db_bind_lr=float(a.get("db_bind_lr", 5e-4)),
        save_images=not a.get("no_images", False),
        **_schedule_args(a),
    )
    report = run_experiment(bench, method, config, models_dir=a.get("models"), out_dir=out)
    print(format_report(report))
    if report["failed_count"]:
        print(f"{report['failed_count']} of {report['task_count']} tasks failed",
              file=sys.stderr)
        return 1
    return 0


def cmd_evaluate(a: dict) -> int:
    runs_root = Path(_req(a, "runs"))
    bench = load_bench(_req(a, "bench"))
    out = a.get("out")
    by_id = {t["task_id"]: t for t in bench.tasks}
    rows = []
    missing = []
    best_list = []
    run_dirs = sorted(d for d in runs_root.iterdir() if (d / "manifest.json").exists())
    if not run_dirs:
        raise UsageError(f"no run directories under {runs_root}")
    for run_dir in run_dirs:
        manifest = read_json(run_dir / "manifest.json")
        task_id = manifest["task_id"]
        if task_id not in by_id:
            missing.append({"task_id": task_id, "reason": "not in bench"})
            continue
        entry = by_id[task_id]
        task = bench.edit_task(entry)
        subject = bench.subject_set(entry["class_label"])
        outputs = sorted(run_dir.glob("iter_*_output.png"))
        if not outputs:
            missing.append({"task_id": task_id, "reason": manifest.get("failure") or "no outputs"})
            continue
        scored = []
        for path in outputs:
            img = load_png(path)
            gen_mask, src_mask = scoring_masks(task, img)
            m = score_example(img, subject, task.source, gen_mask, src_mask)
            scored.append(m)
        best = int(np.argmax([m.geomean() for m in scored]))
        rows.append({
            "task_id": task_id,
            "iterations": [{**m.as_dict(), "overall": m.geomean()} for m in scored],
            "best_iteration": best + 1,
            "best": {**scored[best].as_dict(), "overall": scored[best].geomean()},
        })
        best_list.append(scored[best])
    metrics = round_floats({
        "schema_version": 1,
        "count": len(rows),
        "runs": rows,
        "overall": overall_auto(best_list) if best_list else 0.0,
        "failures": missing,
    })
    if out:
        out_path = Path(out)
        if out_path.suffix != ".json":
            out_path = out_path / "metrics.json"
        out_path.parent.mkdir(parents=True, exist_ok=True)
        write_json(out_path, metrics)
        print(f"scored {len(rows)} runs -> {out_path}")
    else:
        print(canonical_json(metrics), end="")
    if missing:
        print(f"{len(missing)} of {len(run_dirs)} runs not scorable", file=sys.stderr)
        return 1
    return 0


def cmd_report(a: dict) -> int:
    report = read_json(_req(a, "report_path"))
    if a.get("split"):
        print(format_split_table(report["aggregate"]["splits"]))
    else:
        print(format_report(report))
    return 0


HANDLERS = {
    "gen-bench": cmd_gen_bench,
    "train-base": cmd_train_base,
    "bind-subject": cmd_bind_subject,
    "edit": cmd_edit,
    "run-experiment": cmd_run_experiment,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config", None)
    if config_path:
        file_cfg = read_json(config_path)
        if not isinstance(file_cfg, dict):
            print(f"error: config file {config_path} must hold a JSON object", file=sys.stderr)
            return 2
        merged = {**file_cfg, **args}
    else:
        merged = args
    try:
        return HANDLERS[command](merged)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SubpaintError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
