"""Loss suite over the three reconstructions and the encoder training loop.

The encoder is supervised at all three rungs of the ladder simultaneously:
G(w), G(w+) and G(w+, f) are each pulled toward the input image by pixel and
perceptual terms, identity cosine keeps the embedder's pooled features close,
the injected feature is regularized toward the generator's own layer
activation, and the frozen alignment module scores w directly against the
image. The generator, alignment module and perceptual embedder stay frozen
throughout; only the inversion encoder trains.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .alignment import AlignModel, frozen_align_loss
from .encoder import EncoderConfig, InversionEncoder, InversionResult
from .errors import ConfigError, ShapeError, TrainingDivergedError
from .generator import FeatureMap, PairDataset, StyleGenerator
from .metrics import id_sim, lpips_proxy, psnr
from .perceptual import PerceptualEmbedder


@dataclass
class LossWeights:
    lambda_rec: float = 1.0
    lambda_id: float = 0.1
    lambda_freg: float = 0.01
    lambda_align: float = 1.0
    lambda_lpips: float = 0.2
    lambda_l2: float = 1.0

    def __post_init__(self):
        if any(v < 0 for v in self.__dict__.values()):
            raise ConfigError("loss weights must be non-negative")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "LossWeights":
        return cls(**d)


@dataclass
class TrainConfig:
    steps: int = 1200
    batch_size: int = 16
    learning_rate: float = 1e-4
    optimizer: str = "adam"
    seed: int = 0
    eval_every: int = 200
    val_batch: int = 48
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if self.optimizer not in ("adam", "ranger"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["weights"] = self.weights.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "weights" in d and isinstance(d["weights"], dict):
            d["weights"] = LossWeights.from_dict(d["weights"])
        return cls(**d)


# -- loss terms --------------------------------------------------------------


def _batch(t: Tensor, dims: int) -> Tensor:
    return t.unsqueeze(0) if t.dim() == dims else t


def rec_loss(
    image: Tensor, recs: list[Tensor], weights: LossWeights, embedder: PerceptualEmbedder
) -> Tensor:
    """Pixel and perceptual similarity, summed over the reconstruction rungs."""
    image = _batch(image, 3)
    total = image.new_zeros(())
    for rec in recs:
        rec = _batch(rec, 3)
        if rec.shape != image.shape:
            raise ShapeError(f"reconstruction shape {tuple(rec.shape)} != {tuple(image.shape)}")
        l2 = (rec - image).square().mean()
        lpips = lpips_proxy(image, rec, embedder).mean()
        total = total + weights.lambda_lpips * lpips + weights.lambda_l2 * l2
    return total


def id_loss(image: Tensor, recs: list[Tensor], embedder) -> Tensor:
    """Identity cosine dissimilarity, summed over the reconstruction rungs."""
    image = _batch(image, 3)
    total = image.new_zeros(())
    for rec in recs:
        rec = _batch(rec, 3)
        if rec.shape != image.shape:
            raise ShapeError(f"reconstruction shape {tuple(rec.shape)} != {tuple(image.shape)}")
        total = total + (1.0 - id_sim(image, rec, embedder)).mean()
    return total


def f_reg_loss(f: FeatureMap, generator: StyleGenerator, w_plus: Tensor) -> Tensor:
    """Squared distance between the predicted feature and the generator's own.

    Summed over feature elements (per sample), averaged over the batch.
    """
    target = generator.layer_feature(w_plus, f.layer_index).values
    if f.values.shape != target.shape:
        raise ShapeError(f"feature shape {tuple(f.values.shape)} != {tuple(target.shape)}")
    diff = (f.values - target).square()
    if diff.dim() == 3:
        return diff.sum()
    return diff.sum(dim=(1, 2, 3)).mean()


def total_loss(
    image: Tensor,
    result: InversionResult,
    generator: StyleGenerator,
    align_model: AlignModel,
    weights: LossWeights,
    embedder: PerceptualEmbedder,
) -> tuple[Tensor, dict[str, float]]:
    """Weighted sum of all terms plus the per-term breakdown."""
    img_w, img_wp, img_f = generator.synthesize_ladder(result.w, result.w_plus, result.f)
    recs = [img_w, img_wp, img_f]
    l_rec = rec_loss(image, recs, weights, embedder)
    l_id = id_loss(image, recs, embedder)
    l_freg = f_reg_loss(result.f, generator, result.w_plus)
    l_align = frozen_align_loss(align_model, _batch(image, 3), _batch(result.w, 1))
    total = (
        weights.lambda_rec * l_rec
        + weights.lambda_id * l_id
        + weights.lambda_freg * l_freg
        + weights.lambda_align * l_align
    )
    components = {
        "rec": l_rec.item(),
        "id": l_id.item(),
        "freg": l_freg.item(),
        "align": l_align.item(),
        "total": total.item(),
    }
    return total, components


# -- frozen-module bookkeeping ------------------------------------------------


def parameter_checksum(module: nn.Module) -> str:
    """SHA-256 over the raw bytes of every parameter, in state-dict order."""
    h = hashlib.sha256()
    for name, tensor in module.state_dict().items():
        h.update(name.encode())
        h.update(tensor.detach().cpu().numpy().tobytes())
    return h.hexdigest()


# -- optimizers ----------------------------------------------------------------


class Lookahead(torch.optim.Optimizer):
    """Slow/fast weight interpolation wrapped around an inner optimizer."""

    def __init__(self, inner: torch.optim.Optimizer, k: int = 5, alpha: float = 0.5):
        self.inner = inner
        self.k = k
        self.alpha = alpha
        self._counter = 0
        self.param_groups = inner.param_groups
        self.state = {}
        self._slow = [
            [p.detach().clone() for p in group["params"]] for group in inner.param_groups
        ]

    def zero_grad(self, set_to_none: bool = True):
        self.inner.zero_grad(set_to_none=set_to_none)

    @torch.no_grad()
    def step(self, closure=None):
        loss = self.inner.step(closure)
        self._counter += 1
        if self._counter % self.k == 0:
            for group, slow_group in zip(self.inner.param_groups, self._slow):
                for p, slow in zip(group["params"], slow_group):
                    slow.add_(p.detach() - slow, alpha=self.alpha)
                    p.copy_(slow)
        return loss


def build_optimizer(params, cfg: TrainConfig) -> torch.optim.Optimizer:
    if cfg.optimizer == "adam":
        return torch.optim.Adam(params, lr=cfg.learning_rate)
    return Lookahead(torch.optim.RAdam(params, lr=cfg.learning_rate))


# -- validation ----------------------------------------------------------------


def validation_psnr(
    generator: StyleGenerator,
    encoder: InversionEncoder,
    dataset: PairDataset,
    batch: int = 48,
) -> dict[str, float]:
    """Mean PSNR of the three reconstruction rungs on validation images."""
    idx = dataset.val_idx[:batch] if len(dataset.val_idx) else dataset.train_idx[:batch]
    images = torch.from_numpy(dataset.images[idx])
    with torch.no_grad():
        result = encoder.invert(images)
        img_w, img_wp, img_f = generator.synthesize_ladder(result.w, result.w_plus, result.f)
    return {
        "val_psnr_w": psnr(images, img_w).mean().item(),
        "val_psnr_wplus": psnr(images, img_wp).mean().item(),
        "val_psnr_f": psnr(images, img_f).mean().item(),
    }


# -- training loop --------------------------------------------------------------


def train_encoder(
    generator: StyleGenerator,
    align_model: AlignModel,
    dataset: PairDataset,
    cfg: TrainConfig | None = None,
    encoder_config: Optional[EncoderConfig] = None,
    checkpoint_every: int = 0,
    checkpoint_fn=None,
) -> tuple[InversionEncoder, list[dict]]:
    """Train the inversion encoder against a frozen generator and align model.

    Deterministic per config seed. Raises TrainingDivergedError on a
    non-finite loss, and verifies by checksum that no frozen module moved.
    ``checkpoint_fn(step, encoder)`` fires every ``checkpoint_every`` steps
    when both are set.
    """
    cfg = cfg or TrainConfig()
    encoder_config = encoder_config or EncoderConfig.for_generator(generator.config, seed=cfg.seed)
    encoder = InversionEncoder(encoder_config)
    embedder = PerceptualEmbedder()
    frozen_sums = {
        "generator": parameter_checksum(generator),
        "align": parameter_checksum(align_model),
        "embedder": parameter_checksum(embedder),
    }
    opt = build_optimizer(encoder.parameters(), cfg)
    rng = np.random.default_rng(cfg.seed)
    history: list[dict] = []
    last_val = validation_psnr(generator, encoder, dataset, cfg.val_batch)
    batch_size = min(cfg.batch_size, len(dataset.train_idx))
    for step in range(cfg.steps):
        idx = rng.choice(dataset.train_idx, size=batch_size, replace=False)
        images = torch.from_numpy(dataset.images[idx])
        result = encoder.invert(images)
        loss, components = total_loss(images, result, generator, align_model, cfg.weights, embedder)
        if not torch.isfinite(loss):
            raise TrainingDivergedError(step)
        opt.zero_grad()
        loss.backward()
        opt.step()
        if (step + 1) % cfg.eval_every == 0 or step == cfg.steps - 1:
            last_val = validation_psnr(generator, encoder, dataset, cfg.val_batch)
        if checkpoint_fn is not None and checkpoint_every > 0 and (step + 1) % checkpoint_every == 0:
            checkpoint_fn(step + 1, encoder)
        history.append(
            {
                "step": step,
                "l_rec": components["rec"],
                "l_id": components["id"],
                "l_freg": components["freg"],
                "l_align": components["align"],
                "total": components["total"],
                **last_val,
            }
        )
    after = {
        "generator": parameter_checksum(generator),
        "align": parameter_checksum(align_model),
        "embedder": parameter_checksum(embedder),
    }
    if after != frozen_sums:
        moved = [k for k in frozen_sums if frozen_sums[k] != after[k]]
        raise RuntimeError(f"frozen modules changed during training: {moved}")
    encoder.eval()
    return encoder, history


HISTORY_FIELDS = [
    "step",
    "l_rec",
    "l_id",
    "l_freg",
    "l_align",
    "total",
    "val_psnr_w",
    "val_psnr_wplus",
    "val_psnr_f",
]


def write_history_csv(history: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS)
        writer.writeheader()
        writer.writerows(history)
