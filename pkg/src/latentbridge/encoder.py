"""Inversion encoder: pyramid features, map2style heads, cross-attention.

The encoder predicts the full inversion ladder from one image:

- ``predict_w``: the foundation latent from the coarsest pyramid feature.
- ``coarse_residuals``: per-style residuals from all three pyramid tiers.
- w+ cross-attention: each residual row is refined against w (query = w,
  key/value = residual row) and added back onto w.
- f cross-attention: the finest feature queries w (key/value = w) and the
  residual-corrected feature is reduced to the generator's injection slot.

Both attention blocks share one code path. A latent vector, once projected,
is reshaped into ``token_split`` tokens; with a single token the softmax over
keys is identically 1 and the block degenerates to a value projection, which
is the literal one-vector reading; token_split > 1 restores data-dependent
attention weights. Output projections start at zero so the untrained encoder
satisfies w+ = w exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .errors import ConfigError, ShapeError
from .generator import FeatureMap, GeneratorConfig, _fill_normal_, _fill_zero_

_SLOPE = 0.2


@dataclass
class EncoderConfig:
    latent_dim: int = 128
    num_styles: int = 10
    heads: int = 4
    token_split: int = 1
    image_resolution: int = 64
    t3_resolution: int = 16
    f_channels: int = 32
    f_resolution: int = 16
    f_layer_index: int = 5
    base_channels: int = 32
    map2style_width: int = 32
    row_split: tuple[int, int, int] = ()
    use_wplus_attention: bool = True
    use_f_attention: bool = True
    seed: int = 0

    def __post_init__(self):
        d, m, h = self.latent_dim, self.token_split, self.heads
        if d % h != 0:
            raise ConfigError(f"latent_dim {d} not divisible by heads {h}")
        if d % m != 0:
            raise ConfigError(f"latent_dim {d} not divisible by token_split {m}")
        if d % (m * h) != 0:
            raise ConfigError(f"latent_dim {d} not divisible by token_split*heads {m * h}")
        if not self.row_split:
            n = self.num_styles
            t1 = max(1, round(0.3 * n))
            t2 = max(1, round(0.4 * n))
            if t1 + t2 >= n:
                t1, t2 = max(1, n - 2), 1 if n > 2 else 0
            self.row_split = (t1, t2, n - t1 - t2)
        self.row_split = tuple(int(r) for r in self.row_split)
        if sum(self.row_split) != self.num_styles or any(r < 0 for r in self.row_split):
            raise ConfigError(f"row_split {self.row_split} must sum to num_styles {self.num_styles}")
        if self.t3_resolution > self.image_resolution:
            raise ConfigError("t3_resolution cannot exceed image_resolution")
        if self.f_resolution > self.t3_resolution:
            raise ConfigError("f_resolution cannot exceed t3_resolution")

    @classmethod
    def for_generator(cls, gen_cfg: GeneratorConfig, **overrides) -> "EncoderConfig":
        """Encoder config whose targets mirror a generator configuration."""
        c, res, _ = gen_cfg.feature_shape()
        defaults = dict(
            latent_dim=gen_cfg.latent_dim,
            num_styles=gen_cfg.num_styles,
            image_resolution=gen_cfg.image_resolution,
            t3_resolution=res,
            f_channels=c,
            f_resolution=res,
            f_layer_index=gen_cfg.f_layer_index,
        )
        defaults.update(overrides)
        return cls(**defaults)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["row_split"] = list(self.row_split)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        d = dict(d)
        if "row_split" in d:
            d["row_split"] = tuple(d["row_split"])
        return cls(**d)


@dataclass
class PyramidFeatures:
    """Hierarchical features; spatial size strictly increases T1 -> T3."""

    t1: Tensor
    t2: Tensor
    t3: Tensor


@dataclass
class InversionResult:
    w: Tensor
    w_plus: Tensor
    f: FeatureMap
    pyramid: PyramidFeatures
    delta_w_plus: Tensor


class CrossAttentionBlock(nn.Module):
    """Scaled dot-product cross-attention between a query source and a latent.

    Queries may be a single latent vector or a grid of feature positions; the
    key/value source is always one latent vector per batch element. All four
    projections are square (d x d); the output projection is zero-initialized
    so the block starts as the identity under its residual connection.
    """

    def __init__(self, dim: int, heads: int = 4, token_split: int = 1, role: str = "wplus"):
        super().__init__()
        if dim % (heads * token_split) != 0:
            raise ConfigError(f"dim {dim} not divisible by heads*token_split")
        self.dim = dim
        self.heads = heads
        self.token_split = token_split
        self.role = role
        self.w_q = nn.Linear(dim, dim, bias=False)
        self.w_k = nn.Linear(dim, dim, bias=False)
        self.w_v = nn.Linear(dim, dim, bias=False)
        self.w_out = nn.Linear(dim, dim, bias=False)

    def reset_parameters(self, g: torch.Generator) -> None:
        std = 1.0 / math.sqrt(self.dim)
        for lin in (self.w_q, self.w_k, self.w_v):
            _fill_normal_(lin.weight, g, std)
        _fill_zero_(self.w_out.weight)

    def _projected(self, queries: Tensor, kv: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        if queries.shape[-1] != self.dim or kv.shape[-1] != self.dim:
            raise ShapeError(
                f"expected dim {self.dim}, got queries {queries.shape[-1]} / kv {kv.shape[-1]}"
            )
        b, p, d = queries.shape
        m, h = self.token_split, self.heads
        dk = d // (m * h)
        q = self.w_q(queries).view(b, p * m, h, dk).transpose(1, 2)
        k = self.w_k(kv).view(b, m, h, dk).transpose(1, 2)
        v = self.w_v(kv).view(b, m, h, dk).transpose(1, 2)
        return q, k, v

    def attention_weights(self, queries: Tensor, kv: Tensor) -> Tensor:
        """Softmax attention map (B, heads, P*token_split, token_split)."""
        q, k, _ = self._projected(queries, kv)
        dk = q.shape[-1]
        return torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(dk), dim=-1)

    def attend(self, queries: Tensor, kv: Tensor) -> Tensor:
        """Attention output for query vectors (B, P, d) against one latent (B, d)."""
        b, p, _ = queries.shape
        q, k, v = self._projected(queries, kv)
        dk = q.shape[-1]
        attn = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(dk), dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, p, self.dim)
        return self.w_out(out)


def wplus_attention(block: CrossAttentionBlock, w: Tensor, delta_row: Tensor) -> Tensor:
    """One refined style vector: w plus the attention of w over a residual row."""
    unbatched = w.dim() == 1
    if unbatched:
        w = w.unsqueeze(0)
        delta_row = delta_row.unsqueeze(0)
    if w.shape != delta_row.shape:
        raise ShapeError(f"w {tuple(w.shape)} and delta row {tuple(delta_row.shape)} differ")
    out = w + block.attend(w.unsqueeze(1), delta_row).squeeze(1)
    return out.squeeze(0) if unbatched else out


def f_attention(
    block: CrossAttentionBlock, t3: Tensor, w: Tensor, reduce_head: nn.Module
) -> Tensor:
    """Feature prediction: T3 positions query w, residual-add, then reduce.

    ``t3`` is (B, d, r, r) at the encoder's finest resolution; each spatial
    position is one query vector. Returns the reduced feature map.
    """
    unbatched = t3.dim() == 3
    if unbatched:
        t3 = t3.unsqueeze(0)
        w = w.unsqueeze(0)
    b, c, hgt, wid = t3.shape
    if c != block.dim:
        raise ShapeError(f"t3 channels {c} != attention dim {block.dim}")
    if w.shape[-1] != block.dim:
        raise ShapeError(f"w dim {w.shape[-1]} != attention dim {block.dim}")
    positions = t3.flatten(2).transpose(1, 2)
    attended = block.attend(positions, w) + positions
    grid = attended.transpose(1, 2).reshape(b, c, hgt, wid)
    out = reduce_head(grid)
    return out.squeeze(0) if unbatched else out


class Map2Style(nn.Module):
    """Stride-2 conv stack collapsing a feature map into one style vector."""

    def __init__(self, in_channels: int, in_res: int, out_dim: int, width: int = 32):
        super().__init__()
        convs = []
        ch, res = in_channels, in_res
        while res > 1:
            convs.append(nn.Conv2d(ch, width, 3, stride=2, padding=1))
            ch = width
            res //= 2
        self.convs = nn.ModuleList(convs)
        self.fc = nn.Linear(ch, out_dim)

    def reset_parameters(self, g: torch.Generator) -> None:
        for conv in self.convs:
            _fill_normal_(conv.weight, g, math.sqrt(2.0 / (conv.in_channels * 9)))
            _fill_zero_(conv.bias)
        _fill_normal_(self.fc.weight, g, 1.0 / math.sqrt(self.fc.in_features))
        _fill_zero_(self.fc.bias)

    def forward(self, x: Tensor) -> Tensor:
        for conv in self.convs:
            x = F.leaky_relu(conv(x), _SLOPE)
        return self.fc(x.flatten(1))


class _ReduceHead(nn.Module):
    """Spatial/channel reduction from the attended T3 grid to the F slot."""

    def __init__(self, in_channels: int, in_res: int, out_channels: int, out_res: int, width: int = 64):
        super().__init__()
        convs = []
        ch, res = in_channels, in_res
        while res > out_res:
            convs.append(nn.Conv2d(ch, width, 3, stride=2, padding=1))
            ch = width
            res //= 2
        convs.append(nn.Conv2d(ch, width, 3, padding=1))
        self.convs = nn.ModuleList(convs)
        self.out = nn.Conv2d(width, out_channels, 3, padding=1)

    def reset_parameters(self, g: torch.Generator) -> None:
        for conv in list(self.convs) + [self.out]:
            _fill_normal_(conv.weight, g, math.sqrt(2.0 / (conv.in_channels * 9)))
            _fill_zero_(conv.bias)

    def forward(self, x: Tensor) -> Tensor:
        for conv in self.convs:
            x = F.leaky_relu(conv(x), _SLOPE)
        return self.out(x)


class InversionEncoder(nn.Module):
    """Pyramid backbone with map2style heads and the two attention blocks."""

    def __init__(self, config: Optional[EncoderConfig] = None):
        super().__init__()
        self.config = config or EncoderConfig()
        cfg = self.config
        d = cfg.latent_dim

        stem = []
        ch, res = 3, cfg.image_resolution
        i = 0
        while res > cfg.t3_resolution:
            out_ch = min(64, cfg.base_channels * 2**i)
            stem.append(nn.Conv2d(ch, out_ch, 3, stride=2, padding=1))
            ch, res, i = out_ch, res // 2, i + 1
        self.stem = nn.ModuleList(stem)
        self.t3_proj = nn.Conv2d(ch, d, 3, padding=1)
        self.down2 = nn.Conv2d(ch, min(96, 2 * ch), 3, stride=2, padding=1)
        self.down1 = nn.Conv2d(self.down2.out_channels, d, 3, stride=2, padding=1)

        t2_res, t1_res = cfg.t3_resolution // 2, cfg.t3_resolution // 4
        wd = cfg.map2style_width
        self.w_head = Map2Style(d, t1_res, d, wd)
        n1, n2, n3 = cfg.row_split
        self.residual_heads = nn.ModuleList(
            [Map2Style(d, t1_res, d, wd) for _ in range(n1)]
            + [Map2Style(self.down2.out_channels, t2_res, d, wd) for _ in range(n2)]
            + [Map2Style(d, cfg.t3_resolution, d, wd) for _ in range(n3)]
        )
        self.wplus_block = CrossAttentionBlock(d, cfg.heads, cfg.token_split, role="wplus")
        self.f_block = CrossAttentionBlock(d, cfg.heads, cfg.token_split, role="f")
        self.f_head = _ReduceHead(d, cfg.t3_resolution, cfg.f_channels, cfg.f_resolution)
        self.reset_parameters(torch.Generator().manual_seed(cfg.seed))

    def reset_parameters(self, g: torch.Generator) -> None:
        for conv in list(self.stem) + [self.t3_proj, self.down2, self.down1]:
            _fill_normal_(conv.weight, g, math.sqrt(2.0 / (conv.in_channels * 9)))
            _fill_zero_(conv.bias)
        self.w_head.reset_parameters(g)
        for head in self.residual_heads:
            head.reset_parameters(g)
        self.wplus_block.reset_parameters(g)
        self.f_block.reset_parameters(g)
        self.f_head.reset_parameters(g)

    # -- pyramid -----------------------------------------------------------

    def extract_pyramid(self, image: Tensor) -> PyramidFeatures:
        unbatched = image.dim() == 3
        if unbatched:
            image = image.unsqueeze(0)
        res = self.config.image_resolution
        if image.shape[-3:] != (3, res, res):
            raise ShapeError(f"image shape {tuple(image.shape[-3:])} != (3,{res},{res})")
        x = image
        for conv in self.stem:
            x = F.leaky_relu(conv(x), _SLOPE)
        t3 = F.leaky_relu(self.t3_proj(x), _SLOPE)
        mid = F.leaky_relu(self.down2(x), _SLOPE)
        t1 = F.leaky_relu(self.down1(mid), _SLOPE)
        if unbatched:
            t1, mid, t3 = t1.squeeze(0), mid.squeeze(0), t3.squeeze(0)
        return PyramidFeatures(t1=t1, t2=mid, t3=t3)

    def predict_w(self, t1: Tensor) -> Tensor:
        unbatched = t1.dim() == 3
        w = self.w_head(t1.unsqueeze(0) if unbatched else t1)
        return w.squeeze(0) if unbatched else w

    def coarse_residuals(self, pyramid: PyramidFeatures) -> Tensor:
        """Stack of per-style residual rows, coarse tiers first."""
        unbatched = pyramid.t1.dim() == 3
        t1 = pyramid.t1.unsqueeze(0) if unbatched else pyramid.t1
        t2 = pyramid.t2.unsqueeze(0) if unbatched else pyramid.t2
        t3 = pyramid.t3.unsqueeze(0) if unbatched else pyramid.t3
        n1, n2, _ = self.config.row_split
        rows = []
        for i, head in enumerate(self.residual_heads):
            src = t1 if i < n1 else t2 if i < n1 + n2 else t3
            rows.append(head(src))
        delta = torch.stack(rows, dim=1)
        return delta.squeeze(0) if unbatched else delta

    # -- full inversion ------------------------------------------------------

    def invert(self, image: Tensor) -> InversionResult:
        unbatched = image.dim() == 3
        pyramid = self.extract_pyramid(image)
        t1 = pyramid.t1.unsqueeze(0) if unbatched else pyramid.t1
        t3 = pyramid.t3.unsqueeze(0) if unbatched else pyramid.t3
        w = self.w_head(t1)
        delta = self.coarse_residuals(pyramid)
        if unbatched:
            delta = delta.unsqueeze(0)
        b, n, d = delta.shape
        if self.config.use_wplus_attention:
            flat_q = w.unsqueeze(1).expand(b, n, d).reshape(b * n, 1, d)
            flat_kv = delta.reshape(b * n, d)
            refined = self.wplus_block.attend(flat_q, flat_kv).reshape(b, n, d)
            w_plus = w.unsqueeze(1) + refined
        else:
            w_plus = w.unsqueeze(1) + delta
        if self.config.use_f_attention:
            f_values = f_attention(self.f_block, t3, w, self.f_head)
        else:
            f_values = self.f_head(t3)
        if unbatched:
            w = w.squeeze(0)
            w_plus = w_plus.squeeze(0)
            f_values = f_values.squeeze(0)
            delta = delta.squeeze(0)
        return InversionResult(
            w=w,
            w_plus=w_plus,
            f=FeatureMap(f_values, self.config.f_layer_index),
            pyramid=pyramid,
            delta_w_plus=delta,
        )


def invert(encoder: InversionEncoder, generator, image: Tensor) -> InversionResult:
    """Invert an image, checking the encoder matches the generator's geometry."""
    gcfg = generator.config
    ecfg = encoder.config
    if (gcfg.latent_dim, gcfg.num_styles) != (ecfg.latent_dim, ecfg.num_styles):
        raise ConfigError("encoder and generator disagree on latent geometry")
    if gcfg.feature_shape() != (ecfg.f_channels, ecfg.f_resolution, ecfg.f_resolution):
        raise ConfigError("encoder f head does not match the generator feature slot")
    return encoder.invert(image)
