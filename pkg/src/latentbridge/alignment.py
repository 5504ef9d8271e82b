"""Contrastive alignment of image space and the foundation latent space.

A convolutional image encoder and a transformer-style latent encoder are
trained so matched (image, latent) pairs have similar embeddings under a
symmetric InfoNCE objective with a learnable temperature. After pretraining
the module is frozen and reused as a loss that scores how well a predicted
latent fits an image.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .errors import ConfigError, ShapeError, TrainingDivergedError
from .generator import PairDataset, _fill_normal_, _fill_zero_

_SLOPE = 0.2
_LOG_T_MIN = math.log(0.01)
_LOG_T_MAX = math.log(100.0)

Direction = Literal["image_to_latent", "latent_to_image"]


@dataclass
class AlignConfig:
    embed_dim: int = 128
    lambda_mix: float = 0.5
    init_temperature: float = 0.07
    batch_size: int = 64
    steps: int = 2000
    learning_rate: float = 1e-3
    seed: int = 0
    image_resolution: int = 64
    latent_dim: int = 128
    latent_tokens: int = 8
    latent_width: int = 64
    image_base_channels: int = 16

    def __post_init__(self):
        if not 0.0 <= self.lambda_mix <= 1.0:
            raise ConfigError(f"lambda_mix must be in [0,1], got {self.lambda_mix}")
        if self.init_temperature <= 0:
            raise ConfigError("init_temperature must be positive")
        if self.latent_dim % self.latent_tokens != 0:
            raise ConfigError("latent_dim must be divisible by latent_tokens")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "AlignConfig":
        return cls(**d)


class ImageEncoder(nn.Module):
    """Stride-2 conv stack down to 4x4, flattened into a projection head."""

    def __init__(self, resolution: int, embed_dim: int, base_channels: int = 16):
        super().__init__()
        convs = []
        in_ch = 3
        res = resolution
        i = 0
        while res > 4:
            out_ch = min(64, base_channels * 2**i)
            convs.append(nn.Conv2d(in_ch, out_ch, 3, stride=2, padding=1))
            in_ch = out_ch
            res //= 2
            i += 1
        self.convs = nn.ModuleList(convs)
        self.head = nn.Linear(in_ch * res * res, embed_dim)

    def reset_parameters(self, g: torch.Generator) -> None:
        for conv in self.convs:
            _fill_normal_(conv.weight, g, math.sqrt(2.0 / (conv.in_channels * 9)))
            _fill_zero_(conv.bias)
        _fill_normal_(self.head.weight, g, 1.0 / math.sqrt(self.head.in_features))
        _fill_zero_(self.head.bias)

    def forward(self, img: Tensor) -> Tensor:
        x = img
        for conv in self.convs:
            x = F.leaky_relu(conv(x), _SLOPE)
        return self.head(x.flatten(1))


class _SelfAttention(nn.Module):
    def __init__(self, width: int, heads: int = 4):
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(width, 3 * width)
        self.out = nn.Linear(width, width)

    def reset_parameters(self, g: torch.Generator) -> None:
        for lin in (self.qkv, self.out):
            _fill_normal_(lin.weight, g, 1.0 / math.sqrt(lin.in_features))
            _fill_zero_(lin.bias)

    def forward(self, x: Tensor) -> Tensor:
        b, t, w = x.shape
        dk = w // self.heads
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        q = q.view(b, t, self.heads, dk).transpose(1, 2)
        k = k.view(b, t, self.heads, dk).transpose(1, 2)
        v = v.view(b, t, self.heads, dk).transpose(1, 2)
        att = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(dk), dim=-1)
        y = (att @ v).transpose(1, 2).reshape(b, t, w)
        return self.out(y)


class _TransformerBlock(nn.Module):
    def __init__(self, width: int, heads: int = 4):
        super().__init__()
        self.norm1 = nn.LayerNorm(width)
        self.attn = _SelfAttention(width, heads)
        self.norm2 = nn.LayerNorm(width)
        self.mlp = nn.Sequential(nn.Linear(width, 2 * width), nn.GELU(), nn.Linear(2 * width, width))

    def reset_parameters(self, g: torch.Generator) -> None:
        self.attn.reset_parameters(g)
        for lin in (self.mlp[0], self.mlp[2]):
            _fill_normal_(lin.weight, g, 1.0 / math.sqrt(lin.in_features))
            _fill_zero_(lin.bias)

    def forward(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class LatentEncoder(nn.Module):
    """Latent vector as a short token sequence through transformer blocks."""

    def __init__(self, latent_dim: int, embed_dim: int, tokens: int = 8, width: int = 64, depth: int = 2):
        super().__init__()
        self.tokens = tokens
        self.token_dim = latent_dim // tokens
        self.embed = nn.Linear(self.token_dim, width)
        self.pos = nn.Parameter(torch.zeros(tokens, width))
        self.blocks = nn.ModuleList([_TransformerBlock(width) for _ in range(depth)])
        self.norm = nn.LayerNorm(width)
        self.head = nn.Linear(width, embed_dim)

    def reset_parameters(self, g: torch.Generator) -> None:
        _fill_normal_(self.embed.weight, g, 1.0 / math.sqrt(self.token_dim))
        _fill_zero_(self.embed.bias)
        _fill_normal_(self.pos, g, 0.02)
        for block in self.blocks:
            block.reset_parameters(g)
        _fill_normal_(self.head.weight, g, 1.0 / math.sqrt(self.head.in_features))
        _fill_zero_(self.head.bias)

    def forward(self, w: Tensor) -> Tensor:
        x = w.view(w.shape[0], self.tokens, self.token_dim)
        x = self.embed(x) + self.pos
        for block in self.blocks:
            x = block(x)
        x = self.norm(x).mean(dim=1)
        return self.head(x)


class AlignModel(nn.Module):
    """Dual encoders, projection heads and the learnable temperature."""

    def __init__(self, config: AlignConfig | None = None):
        super().__init__()
        self.config = config or AlignConfig()
        cfg = self.config
        self.image_encoder = ImageEncoder(cfg.image_resolution, cfg.embed_dim, cfg.image_base_channels)
        self.latent_encoder = LatentEncoder(cfg.latent_dim, cfg.embed_dim, cfg.latent_tokens, cfg.latent_width)
        self.log_temperature = nn.Parameter(torch.tensor(math.log(cfg.init_temperature)))
        g = torch.Generator().manual_seed(cfg.seed)
        self.image_encoder.reset_parameters(g)
        self.latent_encoder.reset_parameters(g)

    @property
    def temperature(self) -> Tensor:
        return self.log_temperature.clamp(_LOG_T_MIN, _LOG_T_MAX).exp()

    def clamp_temperature_(self) -> None:
        with torch.no_grad():
            self.log_temperature.clamp_(_LOG_T_MIN, _LOG_T_MAX)

    def embed_image(self, img: Tensor) -> Tensor:
        """Unit-norm embedding of an image (or batch of images)."""
        unbatched = img.dim() == 3
        if unbatched:
            img = img.unsqueeze(0)
        res = self.config.image_resolution
        if img.shape[-3:] != (3, res, res):
            raise ShapeError(f"image shape {tuple(img.shape[-3:])} != (3,{res},{res})")
        emb = F.normalize(self.image_encoder(img), dim=-1)
        return emb.squeeze(0) if unbatched else emb

    def embed_latent(self, w: Tensor) -> Tensor:
        """Unit-norm embedding of a latent (or batch of latents)."""
        unbatched = w.dim() == 1
        if unbatched:
            w = w.unsqueeze(0)
        if w.shape[-1] != self.config.latent_dim:
            raise ShapeError(f"latent dim {w.shape[-1]} != {self.config.latent_dim}")
        emb = F.normalize(self.latent_encoder(w), dim=-1)
        return emb.squeeze(0) if unbatched else emb

    def freeze(self) -> "AlignModel":
        self.requires_grad_(False)
        self.eval()
        return self


def directional_loss(
    img_embs: Tensor, lat_embs: Tensor, t: Tensor | float, direction: Direction
) -> Tensor:
    """Mean InfoNCE over the batch in one retrieval direction.

    Rows of the softmax are images for ``image_to_latent`` and latents for
    ``latent_to_image``; the matched pair sits on the diagonal.
    """
    if img_embs.shape[0] == 0:
        raise ValueError("empty batch")
    if img_embs.shape != lat_embs.shape:
        raise ShapeError(f"embedding shapes differ: {tuple(img_embs.shape)} vs {tuple(lat_embs.shape)}")
    sims = img_embs @ lat_embs.T / t
    labels = torch.arange(sims.shape[0], device=sims.device)
    if direction == "image_to_latent":
        return F.cross_entropy(sims, labels)
    if direction == "latent_to_image":
        return F.cross_entropy(sims.T, labels)
    raise ValueError(f"unknown direction {direction!r}")


def align_loss(model: AlignModel, images: Tensor, latents: Tensor) -> Tensor:
    """Convex mix of both directional losses at the model's temperature."""
    img_embs = model.embed_image(images)
    lat_embs = model.embed_latent(latents)
    lam = model.config.lambda_mix
    t = model.temperature
    return lam * directional_loss(img_embs, lat_embs, t, "image_to_latent") + (
        1.0 - lam
    ) * directional_loss(img_embs, lat_embs, t, "latent_to_image")


def frozen_align_loss(model: AlignModel, images: Tensor, latents: Tensor) -> Tensor:
    """align_loss against a frozen model: gradients reach only the inputs."""
    if any(p.requires_grad for p in model.parameters()):
        raise ValueError("align model must be frozen (call model.freeze())")
    return align_loss(model, images, latents)


def retrieval_accuracy(model: AlignModel, images: Tensor, latents: Tensor) -> float:
    """Fraction of images whose matched latent wins the batch cosine ranking."""
    if images.shape[0] < 2:
        raise ValueError("retrieval needs at least 2 pairs")
    with torch.no_grad():
        sims = model.embed_image(images) @ model.embed_latent(latents).T
    hits = sims.argmax(dim=1) == torch.arange(sims.shape[0])
    return hits.float().mean().item()


def pretrain(pairs: PairDataset, cfg: AlignConfig | None = None) -> tuple[AlignModel, list[dict]]:
    """Train the alignment module on (image, latent) pairs, then freeze it.

    Returns the frozen model and a per-step history of loss and in-batch
    retrieval top-1. Deterministic for a fixed config seed.
    """
    cfg = cfg or AlignConfig()
    if len(pairs) == 0:
        raise ValueError("empty pair dataset")
    model = AlignModel(cfg)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    history: list[dict] = []
    train_idx = pairs.train_idx
    batch = min(cfg.batch_size, len(train_idx))
    for step in range(cfg.steps):
        idx = rng.choice(train_idx, size=batch, replace=False)
        images = torch.from_numpy(pairs.images[idx])
        latents = torch.from_numpy(pairs.latents[idx])
        img_embs = model.embed_image(images)
        lat_embs = model.embed_latent(latents)
        t = model.temperature
        loss = cfg.lambda_mix * directional_loss(img_embs, lat_embs, t, "image_to_latent") + (
            1.0 - cfg.lambda_mix
        ) * directional_loss(img_embs, lat_embs, t, "latent_to_image")
        if not torch.isfinite(loss):
            raise TrainingDivergedError(step)
        opt.zero_grad()
        loss.backward()
        opt.step()
        model.clamp_temperature_()
        with torch.no_grad():
            sims = img_embs.detach() @ lat_embs.detach().T
            top1 = (sims.argmax(dim=1) == torch.arange(batch)).float().mean().item()
        history.append({"step": step, "loss": loss.item(), "retrieval_top1": top1})
    model.freeze()
    return model, history


def validation_retrieval(model: AlignModel, pairs: PairDataset, batch: int = 64) -> float:
    """Retrieval top-1 on the first ``batch`` validation pairs."""
    idx = pairs.val_idx[:batch]
    if len(idx) < 2:
        idx = pairs.train_idx[:batch]
    return retrieval_accuracy(
        model, torch.from_numpy(pairs.images[idx]), torch.from_numpy(pairs.latents[idx])
    )


def write_history_csv(history: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["step", "loss", "retrieval_top1"])
        writer.writeheader()
        writer.writerows(history)
