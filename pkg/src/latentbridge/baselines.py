"""Per-image latent optimization into the foundation space.

The comparator for encoder-based inversion: gradient descent on a single w
minimizing pixel and perceptual distance between the render and the target.
Shares the frozen perceptual embedder with the training losses so the two
routes optimize comparable objectives.
"""

from __future__ import annotations

from typing import Optional

import torch
from torch import Tensor

from .errors import ShapeError, TrainingDivergedError
from .generator import StyleGenerator
from .metrics import lpips_proxy
from .perceptual import PerceptualEmbedder


def reconstruction_objective(
    image: Tensor,
    generator: StyleGenerator,
    w: Tensor,
    embedder: PerceptualEmbedder,
    lambda_l2: float = 1.0,
    lambda_lpips: float = 0.2,
) -> Tensor:
    img, _ = generator.synthesize(generator.broadcast(w))
    l2 = (img - image).square().mean()
    return lambda_l2 * l2 + lambda_lpips * lpips_proxy(image, img, embedder).mean()


def optimize_w(
    image: Tensor,
    generator: StyleGenerator,
    steps: int = 500,
    lr: float = 0.02,
    init: Optional[Tensor] = None,
    embedder: Optional[PerceptualEmbedder] = None,
    seed: int = 0,
) -> tuple[Tensor, list[float]]:
    """Fit a single latent to one image by gradient descent.

    ``init`` defaults to the mean latent over 10k mapped noise samples. At the
    exact global minimum (a generator sample initialized at its own latent)
    the gradient vanishes and the latent does not move. Raises
    TrainingDivergedError (with ``.history`` attached) on a non-finite loss.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    res = generator.config.image_resolution
    if image.shape != (3, res, res):
        raise ShapeError(f"image shape {tuple(image.shape)} != (3,{res},{res})")
    embedder = embedder or PerceptualEmbedder()
    if init is None:
        init, _ = generator.latent_statistics(count=10000, seed=seed)
    w = init.detach().clone().requires_grad_(True)
    opt = torch.optim.Adam([w], lr=lr)
    history: list[float] = []
    for step in range(steps):
        loss = reconstruction_objective(image, generator, w, embedder)
        if not torch.isfinite(loss):
            err = TrainingDivergedError(step)
            err.history = history
            raise err
        history.append(loss.item())
        opt.zero_grad()
        loss.backward()
        opt.step()
    return w.detach(), history
