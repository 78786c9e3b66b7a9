"""Tiny conditional noise-prediction UNet and its weight container.

The network is a three-level pixel-space UNet (default channels 16/32/64 at
64x64 input) with GroupNorm + SiLU blocks. Each block receives a fused
embedding of the sinusoidal timestep encoding and the pooled prompt
embedding. The prompt side is a learned token table with mean pooling; the
table is part of the network and trains jointly.

Everything runs on CPU in float32 with torch pinned to one thread so that
repeated runs are bit-identical.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..errors import WeightsFormatError
from .vocab import NULL_ID, PromptTokens, Vocabulary, default_vocabulary

torch.set_num_threads(1)

WEIGHTS_FORMAT_VERSION = 1
MAX_PARAM_COUNT = 2_000_000


@dataclass(frozen=True)
class ArchConfig:
    """Structural hyperparameters; hashed into weight files."""

    image_size: int = 64
    channels: tuple[int, int, int] = (16, 32, 64)
    token_dim: int = 64
    emb_dim: int = 128
    vocab_size: int = 23
    groups: int = 8

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        d = dict(d)
        d["channels"] = tuple(d["channels"])
        return cls(**d)


def arch_hash(arch: ArchConfig) -> str:
    return hashlib.sha256(json.dumps(arch.to_dict(), sort_keys=True).encode()).hexdigest()


def sinusoidal_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Timestep t (B,) to a (B, dim) sin/cos positional encoding."""
    half = dim // 2
    freqs = torch.exp(torch.linspace(0.0, -math.log(10000.0), half, dtype=torch.float32))
    args = t.float()[:, None] * freqs[None, :]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


class _Block(nn.Module):
    """Residual conv block with feature-wise scale-shift conditioning."""

    def __init__(self, c_in: int, c_out: int, emb_dim: int, groups: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(min(groups, c_in), c_in)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.emb_proj = nn.Linear(emb_dim, 2 * c_out)
        self.norm2 = nn.GroupNorm(min(groups, c_out), c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.skip = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else nn.Identity()

    def forward(self, x, emb):
        h = self.conv1(F.silu(self.norm1(x)))
        gamma, beta = self.emb_proj(emb).chunk(2, dim=1)
        h = self.norm2(h) * (1.0 + gamma[:, :, None, None]) + beta[:, :, None, None]
        h = self.conv2(F.silu(h))
        return h + self.skip(x)


class _UNet(nn.Module):
    def __init__(self, arch: ArchConfig):
        super().__init__()
        c1, c2, c3 = arch.channels
        ed, td, g = arch.emb_dim, arch.token_dim, arch.groups
        self.arch = arch
        self.tokens = nn.Embedding(arch.vocab_size, td)
        self.time_mlp = nn.Sequential(nn.Linear(td, ed), nn.SiLU(), nn.Linear(ed, ed))
        self.cond_proj = nn.Linear(td, ed)
        self.stem = nn.Conv2d(3, c1, 3, padding=1)
        self.enc1 = _Block(c1, c1, ed, g)
        self.down1 = nn.Conv2d(c1, c2, 3, stride=2, padding=1)
        self.enc2 = _Block(c2, c2, ed, g)
        self.down2 = nn.Conv2d(c2, c3, 3, stride=2, padding=1)
        self.mid = _Block(c3, c3, ed, g)
        self.upconv1 = nn.Conv2d(c3, c2, 3, padding=1)
        self.dec1 = _Block(c2 + c2, c2, ed, g)
        self.upconv2 = nn.Conv2d(c2, c1, 3, padding=1)
        self.dec2 = _Block(c1 + c1, c1, ed, g)
        self.out_norm = nn.GroupNorm(min(g, c1), c1)
        self.head = nn.Conv2d(c1, 3, 3, padding=1)

    def pooled_embedding(self, ids: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        """Mean over the first `lengths` token embeddings of each row."""
        emb = self.tokens(ids)
        keep = (torch.arange(ids.shape[1], device=ids.device)[None, :] < lengths[:, None])
        emb = emb * keep[:, :, None].to(emb.dtype)
        return emb.sum(dim=1) / lengths[:, None].to(emb.dtype)

    def forward(self, x, t, cond):
        # x: (B, 3, H, W); t: (B,) integer timesteps; cond: (B, token_dim)
        emb = self.time_mlp(sinusoidal_embedding(t, self.arch.token_dim).to(x.dtype))
        emb = F.silu(emb + self.cond_proj(cond))
        h0 = self.stem(x)
        h1 = self.enc1(h0, emb)
        h2 = self.enc2(self.down1(h1), emb)
        m = self.mid(self.down2(h2), emb)
        u1 = F.interpolate(self.upconv1(m), scale_factor=2, mode="nearest")
        d1 = self.dec1(torch.cat([u1, h2], dim=1), emb)
        u2 = F.interpolate(self.upconv2(d1), scale_factor=2, mode="nearest")
        d2 = self.dec2(torch.cat([u2, h1], dim=1), emb)
        return self.head(F.silu(self.out_norm(d2)))


def _init_weights(net: _UNet, seed: int) -> None:
    """Deterministic re-initialization from a private generator.

    Conv/Linear get scaled normal weights and zero bias, norms get identity,
    the token table gets std-0.5 normals, and the output head starts at zero
    so an untrained model predicts zero noise.
    """
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for mod in net.modules():
            if isinstance(mod, (nn.Conv2d, nn.Linear)):
                fan_in = mod.weight[0].numel()
                std = 1.0 / math.sqrt(fan_in)
                mod.weight.copy_(torch.randn(mod.weight.shape, generator=gen) * std)
                if mod.bias is not None:
                    mod.bias.zero_()
            elif isinstance(mod, nn.GroupNorm):
                mod.weight.fill_(1.0)
                mod.bias.zero_()
            elif isinstance(mod, nn.Embedding):
                mod.weight.copy_(torch.randn(mod.weight.shape, generator=gen) * 0.5)
        net.head.weight.zero_()
        net.head.bias.zero_()


class Denoiser:
    """Weight bundle: the UNet, its vocabulary, and binding provenance.

    Instances are used read-only at inference time; the training functions
    clone before mutating.
    """

    def __init__(self, arch: ArchConfig, vocab: Vocabulary, net: _UNet,
                 bound: dict[str, str] | None = None, train_steps: int = 0):
        if vocab.size != arch.vocab_size:
            raise ValueError(f"vocab size {vocab.size} != arch.vocab_size {arch.vocab_size}")
        self.arch = arch
        self.vocab = vocab
        self.net = net
        self.net.eval()
        self.bound = dict(bound or {})
        self.train_steps = int(train_steps)

    @classmethod
    def initialize(cls, arch: ArchConfig | None = None, vocab: Vocabulary | None = None,
                   seed: int = 0) -> "Denoiser":
        vocab = vocab if vocab is not None else default_vocabulary()
        if arch is None:
            arch = ArchConfig(vocab_size=vocab.size)
        net = _UNet(arch)
        n = sum(p.numel() for p in net.parameters())
        if n > MAX_PARAM_COUNT:
            raise ValueError(f"parameter count {n} exceeds budget {MAX_PARAM_COUNT}")
        _init_weights(net, seed)
        return cls(arch, vocab, net)

    def clone(self) -> "Denoiser":
        return Denoiser(self.arch, self.vocab, copy.deepcopy(self.net),
                        bound=self.bound, train_steps=self.train_steps)

    def param_count(self) -> int:
        return sum(p.numel() for p in self.net.parameters())

    # ---- prompt conditioning ----

    def encode_prompt(self, tokens: PromptTokens) -> np.ndarray:
        for i in tokens.ids:
            if i >= self.arch.vocab_size:
                raise ValueError(f"unknown token id {i} (vocabulary size {self.arch.vocab_size})")
        ids = torch.tensor([list(tokens.ids)], dtype=torch.long)
        lengths = torch.tensor([len(tokens.ids)], dtype=torch.long)
        with torch.no_grad():
            pooled = self.net.pooled_embedding(ids, lengths)
        return pooled[0].numpy().astype(np.float32)

    def null_condition(self) -> np.ndarray:
        return self.encode_prompt(PromptTokens((NULL_ID,)))

    # ---- noise prediction ----

    def predict_batch(self, z: np.ndarray, t, cond: np.ndarray) -> np.ndarray:
        """z: (B, H, W, 3); t: int or (B,) ints; cond: (B, token_dim)."""
        if z.ndim != 4 or z.shape[3] != 3:
            raise ValueError(f"expected (B, H, W, 3) batch, got {z.shape}")
        if cond.ndim != 2 or cond.shape[0] != z.shape[0]:
            raise ValueError("cond batch must align with z batch")
        zt = torch.from_numpy(np.ascontiguousarray(z, dtype=np.float32)).permute(0, 3, 1, 2)
        tt = torch.as_tensor(np.broadcast_to(np.asarray(t, dtype=np.int64), (z.shape[0],)).copy())
        ct = torch.from_numpy(np.ascontiguousarray(cond, dtype=np.float32))
        with torch.no_grad():
            out = self.net(zt, tt, ct)
        return out.permute(0, 2, 3, 1).contiguous().numpy()

    def predict(self, z: np.ndarray, t: int, cond: np.ndarray) -> np.ndarray:
        """Single-image noise prediction; z: (H, W, 3), cond: (token_dim,)."""
        if z.ndim != 3 or z.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) input, got {z.shape}")
        return self.predict_batch(z[None], int(t), cond[None])[0]

    def guided_pair(self, z: np.ndarray, t: int, cond: np.ndarray,
                    null_cond: np.ndarray, scale: float) -> np.ndarray:
        """Batched conditional/unconditional pass combined at `scale`.

        Convex form (1-s)*null + s*cond so that s=0 and s=1 reduce exactly
        to the respective single predictions.
        """
        pair = self.predict_batch(np.stack([z, z]), int(t), np.stack([cond, null_cond]))
        s = np.float32(scale)
        return (np.float32(1.0) - s) * pair[1] + s * pair[0]

    # ---- persistence ----

    def weight_hash(self) -> str:
        h = hashlib.sha256()
        for name, tensor in self.net.state_dict().items():
            h.update(name.encode())
            h.update(tensor.numpy().tobytes())
        return h.hexdigest()

    def save(self, path) -> None:
        meta = {
            "format_version": WEIGHTS_FORMAT_VERSION,
            "arch": self.arch.to_dict(),
            "arch_hash": arch_hash(self.arch),
            "vocab": list(self.vocab.words),
            "bound": self.bound,
            "train_steps": self.train_steps,
        }
        arrays = {f"w::{k}": v.numpy() for k, v in self.net.state_dict().items()}
        payload = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            np.savez(fh, _meta=payload, **arrays)

    @classmethod
    def load(cls, path) -> "Denoiser":
        try:
            with np.load(path) as npz:
                meta = json.loads(bytes(npz["_meta"]).decode())
                arrays = {k[3:]: npz[k] for k in npz.files if k.startswith("w::")}
        except Exception as exc:
            raise WeightsFormatError(f"cannot read weights file {path}: {exc}") from exc
        if meta.get("format_version") != WEIGHTS_FORMAT_VERSION:
            raise WeightsFormatError(f"unsupported weights format version {meta.get('format_version')}")
        arch = ArchConfig.from_dict(meta["arch"])
        if arch_hash(arch) != meta["arch_hash"]:
            raise WeightsFormatError("architecture hash mismatch; refusing to load")
        vocab = Vocabulary(tuple(meta["vocab"]))
        net = _UNet(arch)
        expected = net.state_dict()
        if set(expected) != set(arrays):
            raise WeightsFormatError("weights file tensors do not match the architecture")
        state = {}
        for k, ref in expected.items():
            if tuple(arrays[k].shape) != tuple(ref.shape):
                raise WeightsFormatError(f"tensor {k} has shape {arrays[k].shape}, expected {tuple(ref.shape)}")
            state[k] = torch.from_numpy(arrays[k])
        net.load_state_dict(state)
        return cls(arch, vocab, net, bound=meta["bound"], train_steps=meta["train_steps"])


def denoising_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean squared error of a noise prediction; zero iff pred == target."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.astype(np.float64) - target.astype(np.float64)
    return float(np.mean(diff * diff))
