"""Frozen random convolutional embedder.

One fixed-seed network supplies both the multi-tap perceptual distance and the
pooled identity embedding. Random frozen features are a reproducible stand-in
for pretrained perceptual/identity networks, with the same call surface: three
activation taps for distances, a pooled vector for identity cosine.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .generator import _fill_normal_, _fill_zero_

_SLOPE = 0.2


class PerceptualEmbedder(nn.Module):
    """Three stride-2 conv taps plus a pooled identity head, never trained."""

    def __init__(self, channels: tuple[int, int, int] = (16, 32, 64), seed: int = 77):
        super().__init__()
        c1, c2, c3 = channels
        self.conv1 = nn.Conv2d(3, c1, 3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(c1, c2, 3, stride=2, padding=1)
        self.conv3 = nn.Conv2d(c2, c3, 3, stride=2, padding=1)
        g = torch.Generator().manual_seed(seed)
        for conv in (self.conv1, self.conv2, self.conv3):
            fan_in = conv.in_channels * 9
            _fill_normal_(conv.weight, g, math.sqrt(2.0 / fan_in))
            _fill_zero_(conv.bias)
        self.requires_grad_(False)
        self.eval()

    def taps(self, img: Tensor) -> list[Tensor]:
        """Activations of the three tap layers, batched (B, C, H, W)."""
        if img.dim() == 3:
            img = img.unsqueeze(0)
        t1 = F.leaky_relu(self.conv1(img), _SLOPE)
        t2 = F.leaky_relu(self.conv2(t1), _SLOPE)
        t3 = F.leaky_relu(self.conv3(t2), _SLOPE)
        return [t1, t2, t3]

    def embed(self, img: Tensor) -> Tensor:
        """Pooled identity vector (B, C3); squeezed for unbatched input."""
        unbatched = img.dim() == 3
        pooled = self.taps(img)[-1].mean(dim=(2, 3))
        return pooled.squeeze(0) if unbatched else pooled

    def forward(self, img: Tensor) -> Tensor:
        return self.embed(img)
