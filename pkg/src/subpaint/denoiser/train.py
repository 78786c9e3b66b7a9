"""Training loops: base denoising training and special-token binding.

Both loops minimize the standard noise-prediction objective
E ||eps - net(z_t, t, pool(prompt))||^2 with RMSprop (momentum-free, fixed
seed, single thread), so identical configurations produce bit-identical
parameter trajectories. Binding fine-tunes a copy of an already-trained
model on a handful of exemplars whose prompts carry a reserved token.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from ..errors import DivergenceError
from ..images import to_model
from ..schedules import NoiseSchedule
from .net import Denoiser
from .vocab import NULL_ID, SUBJECT_ID, SUBJECT_WORD, PromptTokens


@dataclass(frozen=True)
class TrainExample:
    """One training pair: an image in [0, 1] and its prompt."""

    image: np.ndarray
    tokens: PromptTokens


@dataclass(frozen=True)
class SubjectSet:
    """K exemplars of one subject; every prompt names the subject token once."""

    class_label: str
    images: tuple[np.ndarray, ...]
    prompts: tuple[PromptTokens, ...]

    def __post_init__(self):
        if len(self.images) < 1:
            raise ValueError("subject set needs at least one exemplar")
        if len(self.images) != len(self.prompts):
            raise ValueError("images and prompts must pair up")
        for p in self.prompts:
            if p.count(SUBJECT_ID) != 1:
                raise ValueError("every subject prompt must contain the subject token exactly once")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings for base training and token binding.

    freeze_trunk limits updates to the token table (all network weights
    stay put); train_rows additionally restricts token-table updates to
    the listed rows, so binding one token provably cannot move any other
    prompt's conditioning.
    """

    steps: int = 2000
    batch_size: int = 8
    lr: float = 1e-3
    seed: int = 0
    cond_dropout: float = 0.1
    rms_alpha: float = 0.99
    rms_eps: float = 1e-8
    freeze_embeddings: bool = False
    freeze_trunk: bool = False
    train_rows: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.freeze_embeddings and self.freeze_trunk:
            raise ValueError("freezing both the trunk and the token table leaves nothing to train")
        if self.train_rows is not None:
            if self.freeze_embeddings:
                raise ValueError("train_rows needs the token table unfrozen")
            if len(self.train_rows) == 0:
                raise ValueError("train_rows must name at least one row (or be None)")


@dataclass
class TrainResult:
    model: Denoiser
    losses: list[float] = field(default_factory=list)
    smoothed: list[float] = field(default_factory=list)

    @property
    def initial_loss(self) -> float:
        return self.losses[0] if self.losses else float("nan")

    @property
    def final_smoothed_loss(self) -> float:
        return self.smoothed[-1] if self.smoothed else float("nan")


def _prepare(dataset: Sequence[TrainExample]):
    images = torch.from_numpy(
        np.stack([to_model(ex.image) for ex in dataset]).astype(np.float32)
    ).permute(0, 3, 1, 2).contiguous()
    max_len = max(len(ex.tokens) for ex in dataset)
    ids = torch.full((len(dataset), max_len), NULL_ID, dtype=torch.long)
    lengths = torch.zeros(len(dataset), dtype=torch.long)
    for row, ex in enumerate(dataset):
        ids[row, : len(ex.tokens)] = torch.tensor(list(ex.tokens.ids), dtype=torch.long)
        lengths[row] = len(ex.tokens)
    return images, ids, lengths


def train_base(
    dataset: Sequence[TrainExample],
    schedule: NoiseSchedule,
    config: TrainConfig,
    init: Denoiser | None = None,
) -> TrainResult:
    """Train (or fine-tune, when `init` is given) the noise predictor.

    Returns a new model; `init` is never mutated. With steps=0 the returned
    weights equal the starting point exactly.
    """
    if len(dataset) == 0:
        raise ValueError("dataset must be nonempty")
    if config.steps < 0 or config.batch_size < 1:
        raise ValueError("invalid training config")
    for ex in dataset:
        if ex.image.ndim != 3 or ex.image.shape[2] != 3:
            raise ValueError(f"training image must be (H, W, 3), got {ex.image.shape}")
        for tid in ex.tokens.ids:
            if init is not None and tid >= init.arch.vocab_size:
                raise ValueError(f"token id {tid} outside model vocabulary")

    model = init.clone() if init is not None else Denoiser.initialize(seed=config.seed)
    net = model.net
    net.train()
    images, ids, lengths = _prepare(dataset)

    def trains(name: str) -> bool:
        if name.startswith("tokens."):
            return not config.freeze_embeddings
        return not config.freeze_trunk

    params = [p for n, p in net.named_parameters() if trains(n)]
    if config.train_rows is not None:
        for r in config.train_rows:
            if not (0 <= r < model.arch.vocab_size):
                raise ValueError(f"train_rows entry {r} outside vocabulary")
        row_mask = torch.zeros(model.arch.vocab_size, 1)
        row_mask[list(config.train_rows)] = 1.0
    opt = torch.optim.RMSprop(params, lr=config.lr, alpha=config.rms_alpha,
                              eps=config.rms_eps, momentum=0.0)
    gen = torch.Generator().manual_seed(config.seed)
    abar = torch.from_numpy(schedule.alpha_bar.astype(np.float32))
    null_row_idx = torch.tensor([NULL_ID], dtype=torch.long)

    result = TrainResult(model=model)
    ema = None
    for _ in range(config.steps):
        idx = torch.randint(0, images.shape[0], (config.batch_size,), generator=gen)
        t = torch.randint(1, schedule.T + 1, (config.batch_size,), generator=gen)
        eps = torch.randn((config.batch_size, 3, images.shape[2], images.shape[3]), generator=gen)
        ab = abar[t][:, None, None, None]
        z = torch.sqrt(ab) * images[idx] + torch.sqrt(1.0 - ab) * eps

        cond = net.pooled_embedding(ids[idx], lengths[idx])
        if config.cond_dropout > 0.0:
            drop = torch.rand(config.batch_size, generator=gen) < config.cond_dropout
            null_row = net.tokens(null_row_idx)[0]
            cond = torch.where(drop[:, None], null_row[None, :].expand_as(cond), cond)

        pred = net(z, t, cond)
        loss = torch.mean((pred - eps) ** 2)
        if not torch.isfinite(loss):
            raise DivergenceError(f"non-finite loss at step {len(result.losses)}")
        opt.zero_grad()
        loss.backward()
        if config.train_rows is not None and net.tokens.weight.grad is not None:
            net.tokens.weight.grad.mul_(row_mask)
        opt.step()

        val = float(loss.detach())
        ema = val if ema is None else 0.95 * ema + 0.05 * val
        result.losses.append(val)
        result.smoothed.append(ema)

    net.eval()
    model.train_steps += config.steps
    return result


def bind_token(
    model: Denoiser,
    examples: Sequence[TrainExample],
    token_word: str,
    label: str,
    schedule: NoiseSchedule,
    config: TrainConfig,
    prior_examples: Sequence[TrainExample] | None = None,
) -> TrainResult:
    """Fine-tune a copy of `model` so a reserved token evokes `examples`.

    Every prompt must mention the token exactly once. `prior_examples`
    optionally mixes in unrelated scenes as a drift regularizer; off by
    default, matching a plain fine-tune.
    """
    if model.train_steps < 1:
        raise ValueError("binding requires an already-trained model")
    token_id = model.vocab.id_of(token_word)
    for ex in examples:
        if ex.tokens.count(token_id) != 1:
            raise ValueError(f"every binding prompt must contain {token_word!r} exactly once")
    dataset = list(examples) + list(prior_examples or [])
    result = train_base(dataset, schedule, config, init=model)
    result.model.bound[token_word] = label
    return result


def bind_subject(
    model: Denoiser,
    subject: SubjectSet,
    schedule: NoiseSchedule,
    config: TrainConfig,
    prior_examples: Sequence[TrainExample] | None = None,
) -> TrainResult:
    """Bind the subject token to a SubjectSet via fine-tuning."""
    examples = [TrainExample(img, p) for img, p in zip(subject.images, subject.prompts)]
    return bind_token(model, examples, SUBJECT_WORD, subject.class_label,
                      schedule, config, prior_examples=prior_examples)
