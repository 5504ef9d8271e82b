"""Reconstruction metrics over [-1, 1] images.

psnr and ssim are computed in float64 and support batched inputs (returning
one value per image). lpips_proxy and id_sim stay in the input dtype so they
can double as differentiable loss terms.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import Tensor

from .errors import ShapeError

PSNR_MAX = 2.0  # dynamic range of [-1, 1] images
PSNR_CAP_DB = 100.0
SSIM_WINDOW = 7
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_same_shape(a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def psnr(a: Tensor, b: Tensor) -> Tensor:
    """Peak signal-to-noise ratio in dB, capped at 100."""
    _check_same_shape(a, b)
    x = a.detach().double()
    y = b.detach().double()
    mse = (x - y).square().mean(dim=(-3, -2, -1))
    rmse = mse.sqrt()
    db = 20.0 * torch.log10(PSNR_MAX / rmse.clamp_min(1e-30))
    return torch.where(rmse < 1e-10, torch.full_like(db, PSNR_CAP_DB), db.clamp_max(PSNR_CAP_DB))


def ssim(a: Tensor, b: Tensor) -> Tensor:
    """Mean local SSIM with a uniform 7x7 window, per-channel, data range 2."""
    _check_same_shape(a, b)
    unbatched = a.dim() == 3
    x = a.detach().double()
    y = b.detach().double()
    if unbatched:
        x = x.unsqueeze(0)
        y = y.unsqueeze(0)
    if x.shape[-1] < SSIM_WINDOW or x.shape[-2] < SSIM_WINDOW:
        raise ShapeError(f"images smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} ssim window")
    c = x.shape[1]
    kernel = torch.full((c, 1, SSIM_WINDOW, SSIM_WINDOW), 1.0 / SSIM_WINDOW**2, dtype=x.dtype)

    def win_mean(t: Tensor) -> Tensor:
        return F.conv2d(t, kernel, groups=c)

    mu_x = win_mean(x)
    mu_y = win_mean(y)
    var_x = win_mean(x * x) - mu_x * mu_x
    var_y = win_mean(y * y) - mu_y * mu_y
    cov = win_mean(x * y) - mu_x * mu_y
    c1 = (SSIM_K1 * PSNR_MAX) ** 2
    c2 = (SSIM_K2 * PSNR_MAX) ** 2
    ssim_map = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    )
    out = ssim_map.mean(dim=(1, 2, 3))
    return out.squeeze(0) if unbatched else out


def lpips_proxy(a: Tensor, b: Tensor, embedder) -> Tensor:
    """Multi-tap perceptual distance: unit-normalized activations, squared diff.

    Differentiable in a and b; 0 exactly for identical images.
    """
    _check_same_shape(a, b)
    unbatched = a.dim() == 3
    total = None
    taps_a = embedder.taps(a)
    taps_b = embedder.taps(b)
    for ta, tb in zip(taps_a, taps_b):
        na = F.normalize(ta, dim=1, eps=1e-8)
        nb = F.normalize(tb, dim=1, eps=1e-8)
        d = (na - nb).square().sum(dim=1).mean(dim=(1, 2))
        total = d if total is None else total + d
    out = total / len(taps_a)
    return out.squeeze(0) if unbatched else out


def id_sim(a: Tensor, b: Tensor, embedder) -> Tensor:
    """Cosine similarity of pooled identity embeddings, in [-1, 1]."""
    _check_same_shape(a, b)
    unbatched = a.dim() == 3
    ea = embedder.embed(a.unsqueeze(0) if unbatched else a)
    eb = embedder.embed(b.unsqueeze(0) if unbatched else b)
    sim = F.cosine_similarity(ea, eb, dim=-1, eps=1e-8)
    return sim.squeeze(0) if unbatched else sim
