"""Forward-noising schedules for the diffusion model.

A schedule fixes per-step noise variances beta_1..beta_T and the cumulative
signal fractions abar_0..abar_T (abar_0 = 1 by definition, so arrays indexed
by timestep t run over 0..T inclusive and have length T + 1).

The closed-form forward kernel is

    z_t = sqrt(abar_t) * x + sqrt(1 - abar_t) * eps

which interpolates from the clean input at t = 0 toward pure noise at t = T.
Coefficients are stored in float64; `add_noise` works in the dtype of its
inputs so float32 pipelines stay float32.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FAMILIES = ("linear", "cosine")


@dataclass(frozen=True)
class NoiseSchedule:
    """Precomputed schedule arrays.

    betas has length T (betas[i] is beta_{i+1}); alpha_bar has length T + 1
    with alpha_bar[0] == 1.0 and is strictly decreasing.
    """

    family: str
    T: int
    betas: np.ndarray = field(repr=False)
    alpha_bar: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if self.betas.shape != (self.T,):
            raise ValueError("betas must have shape (T,)")
        if self.alpha_bar.shape != (self.T + 1,):
            raise ValueError("alpha_bar must have shape (T + 1,)")
        if self.alpha_bar[0] != 1.0:
            raise ValueError("alpha_bar[0] must be exactly 1.0")
        if not np.all(np.diff(self.alpha_bar) < 0):
            raise ValueError("alpha_bar must be strictly decreasing")
        if np.any(self.betas <= 0.0) or np.any(self.betas >= 1.0):
            raise ValueError("betas must lie in (0, 1)")


def build_schedule(
    family: str = "linear",
    T: int = 100,
    beta_start: float = 1e-4,
    beta_end: float = 0.02,
    cosine_s: float = 0.008,
) -> NoiseSchedule:
    """Construct a schedule of the given family.

    "linear" spaces betas evenly from beta_start to beta_end. "cosine"
    derives betas from a squared-cosine signal curve, with betas clipped
    to 0.999 near t = T where the curve collapses.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if family == "linear":
        if not (0.0 < beta_start <= beta_end < 1.0):
            raise ValueError("need 0 < beta_start <= beta_end < 1")
        betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
        alpha_bar = np.concatenate(([1.0], np.cumprod(1.0 - betas)))
    elif family == "cosine":
        t = np.arange(T + 1, dtype=np.float64)
        f = np.cos((t / T + cosine_s) / (1.0 + cosine_s) * np.pi / 2.0) ** 2
        alpha_bar = f / f[0]
        betas = np.clip(1.0 - alpha_bar[1:] / alpha_bar[:-1], 1e-8, 0.999)
        alpha_bar = np.concatenate(([1.0], np.cumprod(1.0 - betas)))
    else:
        raise ValueError(f"unknown schedule family {family!r}; expected one of {FAMILIES}")
    return NoiseSchedule(family=family, T=T, betas=betas, alpha_bar=alpha_bar)


def add_noise(schedule: NoiseSchedule, x: np.ndarray, eps: np.ndarray, t: int) -> np.ndarray:
    """Apply the closed-form forward kernel at timestep t.

    t = 0 returns x unchanged (abar_0 = 1). x and eps must have the same
    shape; the computation runs in x's floating dtype.
    """
    if not (0 <= t <= schedule.T):
        raise ValueError(f"t must be in [0, {schedule.T}], got {t}")
    if x.shape != eps.shape:
        raise ValueError(f"x and eps shapes differ: {x.shape} vs {eps.shape}")
    dtype = x.dtype if np.issubdtype(x.dtype, np.floating) else np.float32
    ab = schedule.alpha_bar[t]
    a = np.asarray(np.sqrt(ab), dtype=dtype)
    b = np.asarray(np.sqrt(1.0 - ab), dtype=dtype)
    return a * x.astype(dtype) + b * eps.astype(dtype)
