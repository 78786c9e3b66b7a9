"""Conditional noise predictor: vocabulary, network, and training.

The functional surface mirrors how the rest of the package consumes this
module: a `Denoiser` bundles weights plus vocabulary, and the free
functions below operate on one.
"""

from __future__ import annotations

import numpy as np

from .net import ArchConfig, Denoiser, arch_hash, denoising_loss
from .train import (
    SubjectSet,
    TrainConfig,
    TrainExample,
    TrainResult,
    bind_subject,
    bind_token,
    train_base,
)
from .vocab import (
    BACKDROP_ID,
    BACKDROP_WORD,
    CLASS_WORDS,
    COLOR_WORDS,
    MAX_PROMPT_LEN,
    NULL_ID,
    NULL_PROMPT,
    NULL_WORD,
    SHAPE_WORDS,
    SUBJECT_ID,
    SUBJECT_WORD,
    PromptTokens,
    Vocabulary,
    default_vocabulary,
)

__all__ = [
    "ArchConfig", "Denoiser", "arch_hash", "denoising_loss",
    "SubjectSet", "TrainConfig", "TrainExample", "TrainResult",
    "bind_subject", "bind_token", "train_base",
    "BACKDROP_ID", "BACKDROP_WORD", "CLASS_WORDS", "COLOR_WORDS",
    "MAX_PROMPT_LEN", "NULL_ID", "NULL_PROMPT", "NULL_WORD", "SHAPE_WORDS",
    "SUBJECT_ID", "SUBJECT_WORD", "PromptTokens", "Vocabulary",
    "default_vocabulary", "encode_prompt", "predict_noise", "guided_noise",
]


def encode_prompt(model: Denoiser, tokens: PromptTokens) -> np.ndarray:
    """Pooled embedding of a prompt under the model's token table."""
    return model.encode_prompt(tokens)


def predict_noise(model: Denoiser, z: np.ndarray, t: int, cond: np.ndarray) -> np.ndarray:
    """Noise estimate for a single state at timestep t."""
    return model.predict(z, t, cond)


def guided_noise(model: Denoiser, z: np.ndarray, t: int, cond: np.ndarray,
                 null_cond: np.ndarray | None = None, scale: float = 1.0) -> np.ndarray:
    """Classifier-free combination of conditional and null predictions.

    Computed as (1-scale)*null + scale*cond from two single-image passes,
    so scale=0 returns the null prediction exactly and scale=1 the
    conditional one exactly.
    """
    if scale < 0:
        raise ValueError(f"guidance scale must be >= 0, got {scale}")
    if null_cond is None:
        null_cond = model.null_condition()
    eps_cond = model.predict(z, t, cond)
    eps_null = model.predict(z, t, null_cond)
    s = np.float32(scale)
    return (np.float32(1.0) - s) * eps_null + s * eps_cond
