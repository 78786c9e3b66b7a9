"""Benchmark generation, difficulty splits, experiment runner, and CLI."""

from .experiment import (
    COLUMNS,
    METHODS,
    REPORT_SCHEMA_VERSION,
    ExperimentConfig,
    bound_model_path,
    format_report,
    format_split_table,
    load_bound_models,
    report_json_bytes,
    run_experiment,
    scoring_masks,
    select_tasks,
)
from .generate import (
    HUE_THRESHOLD,
    MANIFEST_SCHEMA_VERSION,
    BenchConfig,
    BenchManifest,
    assign_difficulty,
    generate_bench,
    load_bench,
    measured_subject_hue,
    training_scenes,
)
from .scenes import (
    BAND_HEIGHT,
    BAND_SHIFT,
    CLASS_ORDER,
    CLASS_SPECS,
    SHAPES,
    TEXTURES,
    SceneSpec,
    color_word_for_hue,
    hsv_to_rgb,
    hue_distance,
    render_scene,
    rgb_to_hue,
    shape_support,
)

__all__ = [
    "COLUMNS", "METHODS", "REPORT_SCHEMA_VERSION", "ExperimentConfig",
    "bound_model_path", "format_report", "format_split_table",
    "load_bound_models", "report_json_bytes", "run_experiment",
    "scoring_masks", "select_tasks",
    "HUE_THRESHOLD", "MANIFEST_SCHEMA_VERSION", "BenchConfig", "BenchManifest",
    "assign_difficulty", "generate_bench", "load_bench", "measured_subject_hue",
    "training_scenes",
    "BAND_HEIGHT", "BAND_SHIFT", "CLASS_ORDER", "CLASS_SPECS", "SHAPES",
    "TEXTURES", "SceneSpec", "color_word_for_hue", "hsv_to_rgb",
    "hue_distance", "render_scene", "rgb_to_hue", "shape_support",
]
