"""Deterministic latent walks along a noise schedule.

Encoding walks a clean image up the schedule by inverting the deterministic
sampling rule; sampling walks a noised state back down. Both visit every
integer timestep (no subsampling; T is small here) and share one core move:
re-noise the state's implied clean-image estimate to a different level
while keeping the current noise estimate fixed,

    x0_hat = (z - sqrt(1 - abar_from) * eps) / sqrt(abar_from)
    z'     = sqrt(abar_to) * x0_hat + sqrt(1 - abar_to) * eps

With eps identically zero both directions collapse to pure rescaling by
sqrt(abar_to / abar_from), which the tests exploit as a closed form.

Encoding always runs unguided (optionally conditioned); guidance applies
only on the way down. A model here is anything with predict(z, t, cond)
and null_condition(); the trained Denoiser qualifies, and so do the tiny
analytic stand-ins in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .schedules import NoiseSchedule


@dataclass
class LatentTrajectory:
    """Recorded encode states: states[t] is the latent at timestep t.

    states has shape (k+1, *image_shape); states[0] is the input image
    exactly.
    """

    states: np.ndarray
    k: int
    cond_used: np.ndarray

    def __post_init__(self):
        if self.states.shape[0] != self.k + 1:
            raise ValueError(f"expected {self.k + 1} states, got {self.states.shape[0]}")
        if not np.all(np.isfinite(self.states)):
            raise ValueError("trajectory contains non-finite states")


def _retarget(z: np.ndarray, eps: np.ndarray, ab_from: float, ab_to: float) -> np.ndarray:
    a_from = np.float32(math.sqrt(ab_from))
    b_from = np.float32(math.sqrt(1.0 - ab_from))
    a_to = np.float32(math.sqrt(ab_to))
    b_to = np.float32(math.sqrt(1.0 - ab_to))
    x0_hat = (z - b_from * eps) / a_from
    return a_to * x0_hat + b_to * eps


def _guided_eps(model, z, t, cond, null_cond, scale):
    if scale == 1.0 or null_cond is None:
        return model.predict(z, t, cond)
    if hasattr(model, "guided_pair"):
        return model.guided_pair(z, t, cond, null_cond, scale)
    s = np.float32(scale)
    eps_c = model.predict(z, t, cond)
    eps_n = model.predict(z, t, null_cond)
    return (np.float32(1.0) - s) * eps_n + s * eps_c


def ddim_encode(model, x0: np.ndarray, k: int, schedule: NoiseSchedule,
                cond: np.ndarray | None = None) -> LatentTrajectory:
    """Invert the sampling walk for k steps, recording every state.

    The noise estimate for the step t -> t+1 is taken at the current state
    and timestep t. cond defaults to the model's null condition.
    """
    if not (0 <= k <= schedule.T):
        raise ValueError(f"encode depth k must be in [0, {schedule.T}], got {k}")
    if cond is None:
        cond = model.null_condition()
    ab = schedule.alpha_bar
    z = np.ascontiguousarray(x0, dtype=np.float32)
    states = np.empty((k + 1,) + z.shape, dtype=np.float32)
    states[0] = z
    for t in range(k):
        eps = model.predict(z, t, cond)
        z = _retarget(z, eps, ab[t], ab[t + 1])
        states[t + 1] = z
    return LatentTrajectory(states=states, k=k, cond_used=np.asarray(cond, dtype=np.float32).copy())


def ddim_sample(model, z_k: np.ndarray, k: int, schedule: NoiseSchedule,
                cond: np.ndarray | None = None, guidance_scale: float = 1.0,
                null_cond: np.ndarray | None = None) -> np.ndarray:
    """Walk a state at depth k deterministically down to a clean image.

    Guidance combines conditional and null predictions in convex form; the
    output is clamped to the model's [-1, 1] domain only at the very end.
    """
    if not (0 <= k <= schedule.T):
        raise ValueError(f"start depth k must be in [0, {schedule.T}], got {k}")
    if guidance_scale < 0:
        raise ValueError(f"guidance scale must be >= 0, got {guidance_scale}")
    if cond is None:
        cond = model.null_condition()
    if null_cond is None and guidance_scale != 1.0:
        null_cond = model.null_condition()
    ab = schedule.alpha_bar
    z = np.ascontiguousarray(z_k, dtype=np.float32)
    for t in range(k, 0, -1):
        eps = _guided_eps(model, z, t, cond, null_cond, guidance_scale)
        z = _retarget(z, eps, ab[t], ab[t - 1])
    return np.clip(z, -1.0, 1.0)


def encode_ratio(i: int, r1: float = 0.8, T: int = 100, r_min: float = 0.1,
                 decrement: float = 0.1, convention: str = "offset") -> int:
    """Encode depth k_i for edit iteration i (1-based).

    The ratio starts at r1 and drops by `decrement` per iteration, floored
    at r_min. "offset" counts the drop from iteration 1 (so iteration 1
    uses exactly r1); "literal" applies one drop already at iteration 1.
    """
    if i < 1:
        raise ValueError(f"iteration index must be >= 1, got {i}")
    if not (0.0 < r1 <= 1.0):
        raise ValueError(f"r1 must be in (0, 1], got {r1}")
    if convention == "offset":
        steps_down = i - 1
    elif convention == "literal":
        steps_down = i
    else:
        raise ValueError(f"unknown convention {convention!r}")
    r = max(r_min, r1 - decrement * steps_down)
    k = int(round(T * r))
    return max(1, min(k, T))
