"""Shared fixtures: a small bench, schedule, and models sized for fast tests.

Everything here runs at 32x32 with a 50-step schedule so the full unit
suite stays in CPU-minutes territory.  The acceptance suite builds its own
full-size artifacts and does not use these fixtures.
"""

import time

import numpy as np
import pytest

from subpaint.benchkit.generate import BenchConfig, generate_bench, training_scenes
from subpaint.denoiser import (
    SUBJECT_ID,
    ArchConfig,
    Denoiser,
    TrainConfig,
    bind_subject,
    default_vocabulary,
    train_base,
)
from subpaint.schedules import build_schedule

# endpoints scaled for a 50-step schedule so full noise is actually noise
MINI_T = 50
MINI_BETA = (2e-3, 0.4)


@pytest.fixture(scope="session")
def vocab():
    return default_vocabulary()


@pytest.fixture(scope="session")
def mini_schedule():
    return build_schedule("linear", MINI_T, MINI_BETA[0], MINI_BETA[1])


@pytest.fixture(scope="session")
def mini_arch(vocab):
    return ArchConfig(image_size=32, channels=(8, 16, 32), vocab_size=vocab.size)


@pytest.fixture(scope="session")
def untrained_model(mini_arch, vocab):
    return Denoiser.initialize(mini_arch, vocab, seed=1)


@pytest.fixture(scope="session")
def mini_train_set():
    return training_scenes(24, 32, seed=9)


@pytest.fixture(scope="session")
def mini_model(mini_train_set, mini_schedule, untrained_model):
    cfg = TrainConfig(steps=300, batch_size=8, lr=1e-3, seed=7)
    return train_base(mini_train_set, mini_schedule, cfg, init=untrained_model).model


@pytest.fixture(scope="session")
def mini_bench(tmp_path_factory):
    root = tmp_path_factory.mktemp("mini-bench")
    cfg = BenchConfig(name="mini", classes=2, tasks_per_class=2, exemplars=3,
                      image_size=32, seed=3, scale_min=5, scale_max=7)
    return generate_bench(cfg, root)


@pytest.fixture(scope="session")
def ball_subject(mini_bench):
    return mini_bench.subject_set("ball")


@pytest.fixture(scope="session")
def mini_bound(mini_model, ball_subject, mini_schedule):
    cfg = TrainConfig(steps=150, batch_size=4, lr=1e-2, cond_dropout=0.0,
                      freeze_trunk=True, train_rows=(SUBJECT_ID,), seed=5)
    return bind_subject(mini_model, ball_subject, mini_schedule, cfg).model


@pytest.fixture()
def rng():
    return np.random.default_rng(33)


# --- full-size artifacts shared by the heavyweight statistics tests and the
# --- acceptance suite; built once per session, ~10 CPU-minutes total

ACCEPT_T = 100
ACCEPT_BETA = (1e-3, 0.2)
ACCEPT_BENCH_SEED = 11
ACCEPT_TRAIN_SEED = 7
ACCEPT_BIND_SEED = 5
ACCEPT_BIND_LR = 1e-2
ACCEPT_BIND_STEPS = 500

# wall-clock seconds per build stage, for the end-to-end runtime budget
_ACCEPT_TIMINGS: dict[str, float] = {}


@pytest.fixture(scope="session")
def accept_timings():
    return _ACCEPT_TIMINGS


@pytest.fixture(scope="session")
def accept_schedule():
    return build_schedule("linear", ACCEPT_T, ACCEPT_BETA[0], ACCEPT_BETA[1])


@pytest.fixture(scope="session")
def accept_bench(tmp_path_factory):
    t0 = time.monotonic()
    root = tmp_path_factory.mktemp("accept-bench")
    manifest = generate_bench(BenchConfig(seed=ACCEPT_BENCH_SEED), root)
    _ACCEPT_TIMINGS["bench"] = time.monotonic() - t0
    return manifest


@pytest.fixture(scope="session")
def accept_base(accept_schedule):
    t0 = time.monotonic()
    scenes = training_scenes(256, 64, seed=ACCEPT_TRAIN_SEED)
    cfg = TrainConfig(steps=2000, batch_size=8, lr=1e-3, seed=ACCEPT_TRAIN_SEED)
    model = train_base(scenes, accept_schedule, cfg).model
    _ACCEPT_TIMINGS["train"] = time.monotonic() - t0
    return model


@pytest.fixture(scope="session")
def accept_models_dir(tmp_path_factory, accept_bench, accept_base, accept_schedule):
    from subpaint.benchkit.experiment import bound_model_path
    from subpaint.denoiser import SUBJECT_ID
    from subpaint.images import derive_seed

    t0 = time.monotonic()
    models = tmp_path_factory.mktemp("accept-models")
    accept_base.save(models / "base.npz")
    for label in sorted(accept_bench.classes):
        cfg = TrainConfig(steps=ACCEPT_BIND_STEPS, batch_size=4, lr=ACCEPT_BIND_LR,
                          cond_dropout=0.0, freeze_trunk=True, train_rows=(SUBJECT_ID,),
                          seed=derive_seed(ACCEPT_BIND_SEED, "bind", label))
        bound = bind_subject(accept_base, accept_bench.subject_set(label),
                             accept_schedule, cfg).model
        bound.save(bound_model_path(models, label))
    _ACCEPT_TIMINGS["bind"] = time.monotonic() - t0
    return models


@pytest.fixture(scope="session")
def accept_bound_ball(accept_models_dir):
    from subpaint.benchkit.experiment import bound_model_path
    return Denoiser.load(bound_model_path(accept_models_dir, "ball"))


@pytest.fixture(scope="session")
def accept_dreamedit(tmp_path_factory, accept_bench, accept_models_dir):
    from subpaint.benchkit.experiment import ExperimentConfig, run_experiment

    t0 = time.monotonic()
    out = tmp_path_factory.mktemp("accept-dreamedit")
    cfg = ExperimentConfig(task_type="replace", split="both", seed=0, save_images=False)
    report = run_experiment(accept_bench, "dreamedit", cfg,
                            models_dir=accept_models_dir, out_dir=out)
    _ACCEPT_TIMINGS["experiment"] = time.monotonic() - t0
    return report


@pytest.fixture(scope="session")
def accept_copypaste(tmp_path_factory, accept_bench):
    from subpaint.benchkit.experiment import ExperimentConfig, run_experiment

    out = tmp_path_factory.mktemp("accept-copypaste")
    cfg = ExperimentConfig(task_type="replace", split="both", seed=0, save_images=False)
    return run_experiment(accept_bench, "copypaste", cfg, out_dir=out)


@pytest.fixture(scope="session")
def accept_dreambooth(tmp_path_factory, accept_bench, accept_models_dir):
    from subpaint.benchkit.experiment import ExperimentConfig, run_experiment

    out = tmp_path_factory.mktemp("accept-dreambooth")
    cfg = ExperimentConfig(task_type="replace", split="both", limit_per_class=2,
                           seed=0, save_images=False)
    return run_experiment(accept_bench, "dreambooth", cfg,
                          models_dir=accept_models_dir, out_dir=out)
