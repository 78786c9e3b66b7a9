"""Full-scale gate suite: ten pinned behaviors, one printed verdict line each.

Criteria 1, 2, 4, and 9 are self-contained closed-form or oracle checks.
Criteria 3 and 5-8 run the editing pipeline at the default experiment
operating point (64x64 bench, T=100 schedule, trained base model, bound
subject tokens) via the shared session fixtures. Criterion 10 drives two
fresh generate+experiment chains through the command line.
"""

import math
import time

import numpy as np
import pytest

from subpaint.benchkit import cli
from subpaint.benchkit.experiment import (
    ExperimentConfig,
    load_bound_models,
    select_tasks,
)
from subpaint.denoiser import ArchConfig, Denoiser, default_vocabulary
from subpaint.editor import EditConfig, dream_edit
from subpaint.evaluation import AutoMetrics, overall_auto, overall_human
from subpaint.images import derive_seed, from_model, to_model
from subpaint.masking import dilate
from subpaint.sampler import ddim_encode, ddim_sample, encode_ratio


def _verdict(capsys, num: int, ok: bool, detail: str) -> None:
    line = f"[criterion {num:02d}] {'PASS' if ok else 'FAIL'}: {detail}"
    with capsys.disabled():
        print(line)
    assert ok, line


# published three-aspect rows: (subject, background, realistic, printed overall)
_HUMAN_ROWS_REPLACE = [
    (0.543, 0.0, 0.707, 0.072),
    (0.21, 0.828, 0.668, 0.488),
    (1.0, 0.148, 0.123, 0.263),
    (0.15, 0.773, 0.663, 0.425),
    (1.0, 0.552, 0.147, 0.433),
    (0.778, 0.407, 0.52, 0.548),
    (0.817, 0.505, 0.54, 0.606),
    (0.532, 0.760, 0.557, 0.608),
    (0.630, 0.800, 0.582, 0.664),
]
_HUMAN_ROWS_ADD = [
    (0.477, 0.0, 0.635, 0.067),
    (0.288, 0.302, 0.252, 0.280),
    (0.983, 1.0, 0.033, 0.319),
    (0.21, 0.562, 0.305, 0.33),
    (0.983, 1.0, 0.295, 0.662),
    (0.635, 0.978, 0.265, 0.548),
    (0.633, 0.973, 0.393, 0.623),
    (0.287, 0.99, 0.427, 0.495),
    (0.478, 0.972, 0.528, 0.626),
]


def test_criterion_01_human_overall_reproduction(capsys):
    rows = _HUMAN_ROWS_REPLACE + _HUMAN_ROWS_ADD
    worst = max(abs(overall_human(s, b, r) - printed) for s, b, r, printed in rows)
    _verdict(capsys, 1, worst <= 0.002,
             f"{len(rows)} published rows reproduced, max deviation {worst:.5f} (tol 0.002)")


def _box_any_oracle(bits: np.ndarray, m: int) -> np.ndarray:
    """Window-max via an integer summed-area table: any set pixel in the
    m x m box centered at p (even m rounds up, matching dilate)."""
    if m % 2 == 0:
        m += 1
    r = m // 2
    h, w = bits.shape
    padded = np.pad(bits.astype(np.int64), r)
    table = np.zeros((h + 2 * r + 1, w + 2 * r + 1), dtype=np.int64)
    table[1:, 1:] = padded.cumsum(axis=0).cumsum(axis=1)
    sums = table[m:, m:] - table[:-m, m:] - table[m:, :-m] + table[:-m, :-m]
    return sums > 0


def test_criterion_02_dilation_matches_bruteforce(capsys):
    t0 = time.monotonic()
    rng = np.random.default_rng(202)
    mismatches = 0
    for density in np.linspace(0.01, 0.9, 100):
        bits = rng.random((64, 64)) < density
        for m in (1, 3, 5, 21):
            if not np.array_equal(dilate(bits, m).bits, _box_any_oracle(bits, m)):
                mismatches += 1
    elapsed = time.monotonic() - t0
    _verdict(capsys, 2, mismatches == 0 and elapsed < 10.0,
             f"100 random 64x64 masks x m in (1,3,5,21): {mismatches} mismatches, "
             f"{elapsed:.2f}s (limit 10s)")


@pytest.fixture(scope="session")
def accept_editruns(accept_bench, accept_models_dir, accept_schedule):
    """In-memory edit runs for 20 easy replacement tasks, mirroring the
    experiment runner's per-task configuration."""
    entries = select_tasks(accept_bench, ExperimentConfig(task_type="replace",
                                                          split="easy"))[:20]
    models = load_bound_models(accept_models_dir, [e["class_label"] for e in entries])
    runs = []
    for entry in entries:
        task = accept_bench.edit_task(entry)
        subject = accept_bench.subject_set(entry["class_label"])
        cfg = EditConfig(seed=derive_seed(0, entry["task_id"]))
        runs.append(dream_edit(task, subject, models[entry["class_label"]],
                               cfg, accept_schedule))
    return runs


def test_criterion_03_background_preserved_exactly(accept_editruns, capsys):
    worst_outside = 0.0
    worst_untouched = 0.0
    n_iters = 0
    for run in accept_editruns:
        assert run.failure is None, run.failure
        h, w = run.task.source.shape[:2]
        ever_masked = np.zeros((h, w), dtype=bool)
        for rec in run.iterations:
            outside = ~rec.dilated.bits
            diff = np.abs(rec.output - rec.input)[outside]
            worst_outside = max(worst_outside, float(diff.max()))
            ever_masked |= rec.dilated.bits
            n_iters += 1
        untouched = ~ever_masked
        assert untouched.any()
        drift = np.abs(run.final_image - run.task.source)[untouched]
        worst_untouched = max(worst_untouched, float(drift.max()))
    ok = worst_outside <= 1e-5 and worst_untouched <= 1e-5
    _verdict(capsys, 3, ok,
             f"20 tasks / {n_iters} iterations: outside-mask change {worst_outside:.2e}, "
             f"never-masked drift {worst_untouched:.2e} (tol 1e-5)")


def test_criterion_04_roundtrip_fidelity(accept_bench, accept_base, accept_schedule, capsys):
    t0 = time.monotonic()
    vocab = default_vocabulary()
    zero_model = Denoiser.initialize(ArchConfig(image_size=64, vocab_size=vocab.size),
                                     vocab, seed=0)
    entries = select_tasks(accept_bench, ExperimentConfig(task_type="replace"))[:20]
    k = encode_ratio(1, r1=0.8, T=accept_schedule.T)
    worst_zero = 0.0
    maes = []
    for entry in entries:
        x = to_model(accept_bench.edit_task(entry).source)
        traj = ddim_encode(zero_model, x, k, accept_schedule)
        back = ddim_sample(zero_model, traj.states[-1], k, accept_schedule)
        worst_zero = max(worst_zero, float(np.abs(back - x).max()))
        traj = ddim_encode(accept_base, x, k, accept_schedule)
        back = ddim_sample(accept_base, traj.states[-1], k, accept_schedule)
        maes.append(float(np.abs(from_model(back) - from_model(x)).mean()))
    elapsed = time.monotonic() - t0
    ok = worst_zero <= 1e-5 and max(maes) <= 0.05 and elapsed < 120.0
    _verdict(capsys, 4, ok,
             f"zero-predictor max error {worst_zero:.2e} (tol 1e-5); trained k={k} "
             f"round-trip MAE mean {np.mean(maes):.4f} / max {max(maes):.4f} "
             f"(tol 0.05); {elapsed:.1f}s (limit 120s)")


def test_criterion_05_depth_schedule(accept_dreamedit, capsys):
    expected = [80, 70, 60, 50, 40]
    direct = [encode_ratio(i, r1=0.8, T=100, r_min=0.1) for i in range(1, 6)]
    row_ks = [r["k"] for r in accept_dreamedit["aggregate"]["per_iteration"]]
    bad_rows = sum(1 for r in accept_dreamedit["tasks"] if r["k_schedule"] != expected)
    ok = direct == expected and row_ks == expected and bad_rows == 0
    _verdict(capsys, 5, ok,
             f"k schedule {direct} == {expected} on all "
             f"{len(accept_dreamedit['tasks'])} task rows")


def test_criterion_06_iteration_trend(accept_dreamedit, accept_timings, capsys):
    assert accept_dreamedit["failed_count"] == 0
    easy = [r for r in accept_dreamedit["tasks"] if r["difficulty"] == "easy"]
    assert len(easy) >= 20

    def subject_sim(cell):
        return 0.5 * (cell["dino_sub"] + cell["clipi_sub"])

    improved = sum(
        1 for r in easy
        if subject_sim(r["best"]) >= subject_sim(r["iterations"][0]) - 1e-12)
    frac = improved / len(easy)
    mean_best = float(np.mean([r["best"]["overall"] for r in easy]))
    mean_first = float(np.mean([r["iterations"][0]["overall"] for r in easy]))
    build = sum(accept_timings.get(k, 0.0)
                for k in ("bench", "train", "bind", "experiment"))
    ok = frac >= 0.7 and mean_best >= mean_first and build <= 1800.0
    _verdict(capsys, 6, ok,
             f"{len(easy)} easy replacement tasks: best-iteration subject sim >= "
             f"iteration-1 in {100 * frac:.0f}% (need 70%); mean best overall "
             f"{mean_best:.4f} >= mean iteration-1 overall {mean_first:.4f}; "
             f"pipeline build {build:.0f}s (limit 1800s)")


def test_criterion_07_easy_beats_hard(accept_dreamedit, capsys):
    splits = accept_dreamedit["aggregate"]["splits"]["splits"]
    easy, hard = splits["easy"]["overall"], splits["hard"]["overall"]
    _verdict(capsys, 7, easy > hard,
             f"easy split overall {easy:.4f} > hard split overall {hard:.4f} "
             f"(gap {easy - hard:+.4f})")


def test_criterion_08_baseline_orderings(accept_dreamedit, accept_copypaste,
                                         accept_dreambooth, capsys):
    reports = {"dreamedit": accept_dreamedit, "copypaste": accept_copypaste,
               "dreambooth": accept_dreambooth}
    for name, report in reports.items():
        assert report["failed_count"] == 0, name
    common = set.intersection(
        *(set(r["task_id"] for r in rep["tasks"]) for rep in reports.values()))
    assert len(common) >= 10

    def col_mean(report, col):
        vals = [r["best"][col] for r in report["tasks"] if r["task_id"] in common]
        return float(np.mean(vals))

    sub_ok = all(
        col_mean(accept_copypaste, col) > col_mean(reports[other], col)
        for col in ("dino_sub", "clipi_sub") for other in ("dreamedit", "dreambooth"))
    back_ok = all(
        col_mean(accept_dreambooth, col) < col_mean(reports[other], col)
        for col in ("dino_back", "clipi_back") for other in ("dreamedit", "copypaste"))
    detail = (f"{len(common)} shared tasks: copy-paste subject sims "
              f"({col_mean(accept_copypaste, 'dino_sub'):.3f}, "
              f"{col_mean(accept_copypaste, 'clipi_sub'):.3f}) are the maximum; "
              f"from-scratch generation background sims "
              f"({col_mean(accept_dreambooth, 'dino_back'):.3f}, "
              f"{col_mean(accept_dreambooth, 'clipi_back'):.3f}) are the minimum")
    _verdict(capsys, 8, sub_ok and back_ok, detail)


def test_criterion_09_overall_auto_oracle(capsys):
    rng = np.random.default_rng(909)
    mismatches = 0
    drift = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 41))
        tables = [AutoMetrics(*(float(v) for v in rng.uniform(0.0, 1.0, 4)))
                  for _ in range(n)]
        per = [(m.dino_sub * m.dino_back * m.clipi_sub * m.clipi_back) ** 0.25
               for m in tables]
        got = overall_auto(tables)
        if got != float(np.mean(per)):
            mismatches += 1
        drift = max(drift, abs(got - math.fsum(per) / n))
    _verdict(capsys, 9, mismatches == 0 and drift < 1e-12,
             f"50 random tables: {mismatches} mismatches vs geomean-then-mean "
             f"oracle, fsum drift {drift:.2e}")


def test_criterion_10_end_to_end_determinism(tmp_path, accept_models_dir, capsys):
    blobs = []
    for tag in ("first", "second"):
        bench_dir = tmp_path / f"bench-{tag}"
        out_dir = tmp_path / f"out-{tag}"
        assert cli.main(["gen-bench", "--out", str(bench_dir), "--seed", "11"]) == 0
        rc = cli.main(["run-experiment", "--bench", str(bench_dir),
                       "--models", str(accept_models_dir), "--method", "dreamedit",
                       "--task-type", "replace", "--limit-per-class", "1",
                       "--iters", "2", "--seed", "0", "--out", str(out_dir),
                       "--no-images"])
        assert rc == 0
        blobs.append(((bench_dir / "manifest.json").read_bytes(),
                      (out_dir / "report.json").read_bytes()))
    same_bench = blobs[0][0] == blobs[1][0]
    same_report = blobs[0][1] == blobs[1][1]
    _verdict(capsys, 10, same_bench and same_report,
             f"two generate+experiment chains: manifest bytes identical={same_bench}, "
             f"report.json bytes identical={same_report} "
             f"({len(blobs[0][1])} bytes)")
