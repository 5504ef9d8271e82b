"""Frozen toy style-based generator.

A mapping network turns noise z into a latent w; the synthesis network starts
from a learned constant and applies per-layer 3x3 convolutions modulated by
AdaIN, two style layers per resolution level, ending in a tanh RGB head.
Parameters are randomly initialized from a fixed seed and then frozen: the
sample set of this generator *is* the data distribution, so every image has a
known ground-truth latent and inversion is well-posed at desk scale.

Conventions:
- latents w are (d,) or (B, d); extended latents w+ are (N, d) or (B, N, d)
- images are (3, res, res) or (B, 3, res, res) with values in [-1, 1]
- convolution layers are numbered 1..N; layer i runs at resolution
  4 * 2**((i-1)//2); ``f_layer_index`` selects the layer whose activation is
  the feature-space injection slot
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .errors import ConfigError, ShapeError

_LRELU_SLOPE = 0.2


def _fill_normal_(param: Tensor, g: torch.Generator, std: float) -> None:
    with torch.no_grad():
        param.copy_(torch.randn(param.shape, generator=g, dtype=param.dtype) * std)


def _fill_zero_(param: Tensor) -> None:
    with torch.no_grad():
        param.zero_()


def default_channel_schedule(image_resolution: int, max_channels: int = 64) -> dict[int, int]:
    """Per-resolution channel counts, halving from ``max_channels`` above 8x8."""
    schedule = {}
    res = 4
    while res <= image_resolution:
        schedule[res] = min(max_channels, max(4, max_channels * 8 // res))
        res *= 2
    return schedule


@dataclass
class GeneratorConfig:
    image_resolution: int = 64
    latent_dim: int = 128
    channel_schedule: dict[int, int] = field(default_factory=dict)
    f_layer_index: int = 5
    seed: int = 0

    def __post_init__(self):
        res = self.image_resolution
        if res < 8 or res & (res - 1) != 0:
            raise ConfigError(f"image_resolution must be a power of two >= 8, got {res}")
        if not self.channel_schedule:
            self.channel_schedule = default_channel_schedule(res)
        self.channel_schedule = {int(k): int(v) for k, v in self.channel_schedule.items()}
        expected = [4 * 2**i for i in range(int(math.log2(res)) - 1)]
        if sorted(self.channel_schedule) != expected:
            raise ConfigError(f"channel_schedule must cover resolutions {expected}")
        if any(c <= 0 for c in self.channel_schedule.values()):
            raise ConfigError("channel counts must be positive")
        if not 1 <= self.f_layer_index < self.num_styles:
            raise ConfigError(
                f"f_layer_index must be in [1, {self.num_styles}), got {self.f_layer_index}"
            )

    @property
    def num_styles(self) -> int:
        return 2 * int(math.log2(self.image_resolution)) - 2

    def layer_resolution(self, layer: int) -> int:
        """Resolution of convolution layer ``layer`` (1-indexed)."""
        if not 1 <= layer <= self.num_styles:
            raise IndexError(f"layer {layer} out of range [1, {self.num_styles}]")
        return 4 * 2 ** ((layer - 1) // 2)

    def layer_channels(self, layer: int) -> int:
        return self.channel_schedule[self.layer_resolution(layer)]

    def feature_shape(self, layer: Optional[int] = None) -> tuple[int, int, int]:
        layer = self.f_layer_index if layer is None else layer
        res = self.layer_resolution(layer)
        return (self.channel_schedule[res], res, res)

    def to_dict(self) -> dict:
        return {
            "image_resolution": self.image_resolution,
            "latent_dim": self.latent_dim,
            "channel_schedule": {str(k): v for k, v in self.channel_schedule.items()},
            "f_layer_index": self.f_layer_index,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        d = dict(d)
        if "channel_schedule" in d and d["channel_schedule"]:
            d["channel_schedule"] = {int(k): v for k, v in d["channel_schedule"].items()}
        return cls(**d)


@dataclass
class FeatureMap:
    """Activation of one synthesis layer, tagged with its layer ordinal."""

    values: Tensor
    layer_index: int


class PixelNorm(nn.Module):
    def forward(self, x: Tensor) -> Tensor:
        return x * torch.rsqrt(x.pow(2).mean(dim=-1, keepdim=True) + 1e-8)


class MappingNetwork(nn.Module):
    """z -> w, a small MLP over pixel-normalized noise."""

    def __init__(self, latent_dim: int, hidden_layers: int = 2):
        super().__init__()
        self.latent_dim = latent_dim
        self.norm = PixelNorm()
        self.layers = nn.ModuleList(
            [nn.Linear(latent_dim, latent_dim) for _ in range(hidden_layers + 1)]
        )

    def reset_parameters(self, g: torch.Generator) -> None:
        for layer in self.layers:
            _fill_normal_(layer.weight, g, math.sqrt(2.0 / self.latent_dim))
            _fill_zero_(layer.bias)

    def forward(self, z: Tensor) -> Tensor:
        x = self.norm(z)
        for layer in self.layers[:-1]:
            x = F.leaky_relu(layer(x), _LRELU_SLOPE)
        return self.layers[-1](x)


class AdaIN(nn.Module):
    """Per-channel instance normalization followed by a style-derived affine."""

    def __init__(self, channels: int, latent_dim: int):
        super().__init__()
        self.affine = nn.Linear(latent_dim, 2 * channels)

    def reset_parameters(self, g: torch.Generator) -> None:
        # Scale the style projection so AdaIN gains stay well away from tanh
        # saturation for unit-scale latents.
        _fill_normal_(self.affine.weight, g, 0.5 / math.sqrt(self.affine.in_features))
        _fill_zero_(self.affine.bias)

    def forward(self, x: Tensor, w: Tensor) -> Tensor:
        stats = self.affine(w)
        scale, shift = stats.chunk(2, dim=-1)
        mean = x.mean(dim=(2, 3), keepdim=True)
        var = x.var(dim=(2, 3), keepdim=True, unbiased=False)
        normed = (x - mean) * torch.rsqrt(var + 1e-8)
        return (1.0 + scale[:, :, None, None]) * normed + shift[:, :, None, None]


class SynthesisLayer(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, latent_dim: int, upsample: bool):
        super().__init__()
        self.upsample = upsample
        self.conv = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.adain = AdaIN(out_channels, latent_dim)

    def reset_parameters(self, g: torch.Generator) -> None:
        fan_in = self.conv.in_channels * 9
        _fill_normal_(self.conv.weight, g, math.sqrt(2.0 / fan_in))
        _fill_zero_(self.conv.bias)
        self.adain.reset_parameters(g)

    def forward(self, x: Tensor, w: Tensor) -> Tensor:
        if self.upsample:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
        x = self.conv(x)
        x = self.adain(x, w)
        return F.leaky_relu(x, _LRELU_SLOPE)


class SynthesisNetwork(nn.Module):
    """AdaIN-modulated synthesis from a learned 4x4 constant."""

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        c0 = config.channel_schedule[4]
        self.const = nn.Parameter(torch.zeros(c0, 4, 4))
        layers = []
        in_ch = c0
        for i in range(1, config.num_styles + 1):
            out_ch = config.layer_channels(i)
            upsample = i > 1 and i % 2 == 1
            layers.append(SynthesisLayer(in_ch, out_ch, config.latent_dim, upsample))
            in_ch = out_ch
        self.layers = nn.ModuleList(layers)
        self.to_rgb = nn.Conv2d(in_ch, 3, 1)

    def reset_parameters(self, g: torch.Generator) -> None:
        _fill_normal_(self.const, g, 1.0)
        for layer in self.layers:
            layer.reset_parameters(g)
        _fill_normal_(self.to_rgb.weight, g, 1.2 / math.sqrt(self.to_rgb.in_channels))
        _fill_zero_(self.to_rgb.bias)

    def forward(
        self, w_plus: Tensor, f_override: Optional[Tensor] = None, override_layer: int = 0
    ) -> tuple[Tensor, list[Tensor]]:
        """Run all layers; optionally replace layer ``override_layer``'s output."""
        batch = w_plus.shape[0]
        x = self.const.unsqueeze(0).expand(batch, -1, -1, -1)
        features = []
        for i, layer in enumerate(self.layers, start=1):
            x = layer(x, w_plus[:, i - 1])
            if f_override is not None and i == override_layer:
                x = f_override
            features.append(x)
        return torch.tanh(self.to_rgb(x)), features

    def forward_prefix(self, w_plus: Tensor, upto_layer: int) -> Tensor:
        """Activation of layer ``upto_layer`` without running later layers."""
        batch = w_plus.shape[0]
        x = self.const.unsqueeze(0).expand(batch, -1, -1, -1)
        for i, layer in enumerate(self.layers[:upto_layer], start=1):
            x = layer(x, w_plus[:, i - 1])
        return x

    def forward_from(self, x: Tensor, w_plus: Tensor, after_layer: int) -> Tensor:
        """Resume synthesis with ``x`` standing in for layer ``after_layer``'s output."""
        for i, layer in enumerate(self.layers, start=1):
            if i <= after_layer:
                continue
            x = layer(x, w_plus[:, i - 1])
        return torch.tanh(self.to_rgb(x))


class StyleGenerator(nn.Module):
    """The frozen generator: mapping, synthesis, feature taps and pair sampling."""

    def __init__(self, config: Optional[GeneratorConfig] = None):
        super().__init__()
        self.config = config or GeneratorConfig()
        self.mapping = MappingNetwork(self.config.latent_dim)
        self.synthesis = SynthesisNetwork(self.config)
        g = torch.Generator().manual_seed(self.config.seed)
        self.mapping.reset_parameters(g)
        self.synthesis.reset_parameters(g)
        self.requires_grad_(False)
        self.eval()

    # -- latent plumbing ---------------------------------------------------

    def map_latent(self, z: Tensor) -> Tensor:
        if z.shape[-1] != self.config.latent_dim:
            raise ShapeError(
                f"z has dim {z.shape[-1]}, expected {self.config.latent_dim}"
            )
        unbatched = z.dim() == 1
        w = self.mapping(z.unsqueeze(0) if unbatched else z)
        return w.squeeze(0) if unbatched else w

    def broadcast(self, w: Tensor) -> Tensor:
        """Repeat w across all style layers: the canonical meaning of G(w)."""
        n = self.config.num_styles
        if w.dim() == 1:
            return w.unsqueeze(0).expand(n, -1)
        return w.unsqueeze(1).expand(-1, n, -1)

    def _check_w_plus(self, w_plus: Tensor) -> tuple[Tensor, bool]:
        cfg = self.config
        if w_plus.dim() == 2:
            w_plus = w_plus.unsqueeze(0)
            unbatched = True
        elif w_plus.dim() == 3:
            unbatched = False
        else:
            raise ShapeError(f"w_plus must be (N,d) or (B,N,d), got {tuple(w_plus.shape)}")
        if w_plus.shape[1] != cfg.num_styles or w_plus.shape[2] != cfg.latent_dim:
            raise ShapeError(
                f"w_plus rows must be ({cfg.num_styles},{cfg.latent_dim}), "
                f"got {tuple(w_plus.shape[1:])}"
            )
        return w_plus, unbatched

    # -- synthesis ---------------------------------------------------------

    def synthesize(
        self, w_plus: Tensor, f_override: Optional[FeatureMap] = None
    ) -> tuple[Tensor, list[FeatureMap]]:
        """Generate an image, returning all per-layer features for inspection."""
        w_plus, unbatched = self._check_w_plus(w_plus)
        override = None
        k = self.config.f_layer_index
        if f_override is not None:
            if f_override.layer_index != k:
                raise ShapeError(
                    f"f_override is for layer {f_override.layer_index}, expected {k}"
                )
            override = f_override.values
            if override.dim() == 3:
                override = override.unsqueeze(0)
            expected = (w_plus.shape[0], *self.config.feature_shape())
            if tuple(override.shape) != expected:
                raise ShapeError(
                    f"f_override shape {tuple(override.shape)} != expected {expected}"
                )
        img, feats = self.synthesis(w_plus, override, k)
        if unbatched:
            img = img.squeeze(0)
            feats = [f.squeeze(0) for f in feats]
        return img, [FeatureMap(f, i) for i, f in enumerate(feats, start=1)]

    def layer_feature(self, w_plus: Tensor, layer: Optional[int] = None) -> FeatureMap:
        """Feature of one synthesis layer; equals the synthesize() entry exactly."""
        layer = self.config.f_layer_index if layer is None else layer
        if not 1 <= layer <= self.config.num_styles:
            raise IndexError(
                f"layer {layer} out of range [1, {self.config.num_styles}]"
            )
        w_plus, unbatched = self._check_w_plus(w_plus)
        x = self.synthesis.forward_prefix(w_plus, layer)
        return FeatureMap(x.squeeze(0) if unbatched else x, layer)

    def synthesize_from_feature(self, f: FeatureMap, w_plus: Tensor) -> Tensor:
        """Image from a feature injected at its layer, styled by w_plus above it."""
        w_plus, unbatched = self._check_w_plus(w_plus)
        x = f.values
        if x.dim() == 3:
            x = x.unsqueeze(0)
        img = self.synthesis.forward_from(x, w_plus, f.layer_index)
        return img.squeeze(0) if unbatched else img

    def synthesize_ladder(
        self, w: Tensor, w_plus: Tensor, f: FeatureMap
    ) -> tuple[Tensor, Tensor, Tensor]:
        """The three reconstructions G(w), G(w+), G(w+, f) in one pass.

        The G(w+, f) image reuses the G(w+) prefix below the injection layer,
        so the ladder costs roughly 2.5 synthesis passes instead of 3.
        """
        img_w, _ = self.synthesis(self._as_batched_wplus(self.broadcast(w)))
        w_plus_b, _ = self._check_w_plus(w_plus)
        img_wp, _ = self.synthesis(w_plus_b)
        img_f = self.synthesize_from_feature(f, w_plus)
        squeeze = w_plus.dim() == 2
        if squeeze:
            img_w = img_w.squeeze(0)
            img_wp = img_wp.squeeze(0)
        return img_w, img_wp, img_f

    def _as_batched_wplus(self, w_plus: Tensor) -> Tensor:
        return w_plus.unsqueeze(0) if w_plus.dim() == 2 else w_plus

    # -- sampling ----------------------------------------------------------

    def sample_pairs(self, count: int, seed: int = 0, chunk: int = 256) -> "PairDataset":
        """Synthesize (image, w) pairs; images are exact renders of their latents."""
        if count <= 0:
            raise ValueError(f"count must be positive, got {count}")
        cfg = self.config
        g = torch.Generator().manual_seed(seed)
        z = torch.randn(count, cfg.latent_dim, generator=g)
        images = np.empty((count, 3, cfg.image_resolution, cfg.image_resolution), dtype=np.float32)
        latents = np.empty((count, cfg.latent_dim), dtype=np.float32)
        with torch.no_grad():
            for start in range(0, count, chunk):
                zc = z[start : start + chunk]
                w = self.mapping(zc)
                img, _ = self.synthesis(self.broadcast(w))
                images[start : start + len(zc)] = img.numpy()
                latents[start : start + len(zc)] = w.numpy()
        return PairDataset.build(images, latents, seed)

    def latent_statistics(self, count: int = 10000, seed: int = 0) -> tuple[Tensor, Tensor]:
        """Monte-Carlo per-dimension mean and std of w over mapped noise samples."""
        g = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            ws = []
            for start in range(0, count, 2048):
                n = min(2048, count - start)
                ws.append(self.mapping(torch.randn(n, self.config.latent_dim, generator=g)))
            w = torch.cat(ws)
        return w.mean(dim=0), w.std(dim=0)


class PairDataset:
    """(image, latent) pairs with a disjoint train/val split."""

    def __init__(
        self,
        images: np.ndarray,
        latents: np.ndarray,
        train_idx: np.ndarray,
        val_idx: np.ndarray,
        seed: int,
    ):
        self.images = images
        self.latents = latents
        self.train_idx = train_idx
        self.val_idx = val_idx
        self.seed = seed

    @classmethod
    def build(cls, images: np.ndarray, latents: np.ndarray, seed: int) -> "PairDataset":
        count = len(images)
        rng = np.random.default_rng(seed)
        perm = rng.permutation(count)
        val_n = max(1, count // 20) if count >= 2 else 0
        return cls(images, latents, np.sort(perm[val_n:]), np.sort(perm[:val_n]), seed)

    def __len__(self) -> int:
        return len(self.images)

    def nbytes(self) -> int:
        return self.images.nbytes + self.latents.nbytes

    def save(self, path: str | Path) -> None:
        np.savez(
            path,
            images=self.images,
            latents=self.latents,
            train_idx=self.train_idx,
            val_idx=self.val_idx,
            seed=np.int64(self.seed),
        )

    @classmethod
    def load(cls, path: str | Path) -> "PairDataset":
        with np.load(path) as d:
            return cls(
                d["images"], d["latents"], d["train_idx"], d["val_idx"], int(d["seed"])
            )


class LinearGenerator:
    """Degenerate single-affine-layer generator with the same call surface.

    Both the injected feature and the image are affine in vec(w+), which gives
    closed-form oracles: feature = A @ vec(w+) + a and image = B @ vec(f) + b.
    Weights are scaled so outputs stay inside [-1, 1] for unit-scale latents.
    """

    def __init__(
        self,
        latent_dim: int = 8,
        num_styles: int = 4,
        feature_shape: tuple[int, int, int] = (2, 4, 4),
        resolution: int = 8,
        seed: int = 0,
        dtype: torch.dtype = torch.float64,
    ):
        self.latent_dim = latent_dim
        self.num_styles = num_styles
        self.feature_shape = feature_shape
        self.resolution = resolution
        self.f_layer_index = 1
        g = torch.Generator().manual_seed(seed)
        in_dim = num_styles * latent_dim
        f_dim = int(np.prod(feature_shape))
        img_dim = 3 * resolution * resolution
        scale_a = 0.05 / math.sqrt(in_dim)
        scale_b = 0.05 / math.sqrt(f_dim)
        self.A = torch.randn(f_dim, in_dim, generator=g, dtype=dtype) * scale_a
        self.a = torch.randn(f_dim, generator=g, dtype=dtype) * 0.01
        self.B = torch.randn(img_dim, f_dim, generator=g, dtype=dtype) * scale_b
        self.b = torch.randn(img_dim, generator=g, dtype=dtype) * 0.01

    def broadcast(self, w: Tensor) -> Tensor:
        if w.dim() == 1:
            return w.unsqueeze(0).expand(self.num_styles, -1)
        return w.unsqueeze(1).expand(-1, self.num_styles, -1)

    def layer_feature(self, w_plus: Tensor, layer: Optional[int] = None) -> FeatureMap:
        layer = self.f_layer_index if layer is None else layer
        if layer != self.f_layer_index:
            raise IndexError("linear generator has a single feature layer")
        flat = w_plus.reshape(-1)
        values = (self.A @ flat + self.a).reshape(self.feature_shape)
        return FeatureMap(values, layer)

    def synthesize(
        self, w_plus: Tensor, f_override: Optional[FeatureMap] = None
    ) -> tuple[Tensor, list[FeatureMap]]:
        if f_override is None:
            f = self.layer_feature(w_plus)
        else:
            if f_override.layer_index != self.f_layer_index:
                raise ShapeError("override layer mismatch")
            f = f_override
        img = (self.B @ f.values.reshape(-1) + self.b).reshape(3, self.resolution, self.resolution)
        return img, [f]

    def synthesize_from_feature(self, f: FeatureMap, w_plus: Tensor) -> Tensor:
        return self.synthesize(w_plus, f)[0]
