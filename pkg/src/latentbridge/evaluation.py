"""Evaluation and ablation harness producing metric report tables.

A report row is one inversion variant scored by mean PSNR, SSIM, perceptual
distance, identity similarity and per-image wall-clock seconds over a shared
evaluation set. Full-scale reference numbers from the source benchmarks are
carried as metadata only; desk-scale acceptance relies on orderings and
oracle-fixed thresholds, never on reproducing the reference values.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import torch
from torch import Tensor

from .alignment import AlignModel
from .baselines import optimize_w
from .encoder import EncoderConfig, InversionEncoder
from .generator import PairDataset, StyleGenerator
from .metrics import id_sim, lpips_proxy, psnr, ssim
from .perceptual import PerceptualEmbedder
from .training import TrainConfig, train_encoder

# Published full-scale results for context (face benchmark); desk-scale runs
# are not expected to reproduce these.
FULL_SCALE_REFERENCE = {
    "main": {"psnr": 24.50, "ssim": 0.68, "lpips": 0.06, "id": 0.79, "seconds_per_image": 0.080},
    "ablation_psnr_ladder": [16.95, 18.15, 19.36, 20.61, 21.23, 23.93, 24.50],
    "ablation_rows": [
        "optimization",
        "w_no_align",
        "w",
        "wplus_no_attention",
        "wplus",
        "full_no_f_attention",
        "full",
    ],
}

ABLATION_ROWS = tuple(FULL_SCALE_REFERENCE["ablation_rows"])

Inverter = Callable[[Tensor], Tensor]


@dataclass
class MetricRow:
    variant: str
    psnr: float = float("nan")
    ssim: float = float("nan")
    lpips_proxy: float = float("nan")
    id_sim: float = float("nan")
    seconds_per_image: float = float("nan")
    error: str = ""


@dataclass
class MetricReport:
    rows: list[MetricRow]
    sample_count: int
    seed: int
    reference: dict = field(default_factory=lambda: FULL_SCALE_REFERENCE)

    def row(self, variant: str) -> MetricRow:
        for r in self.rows:
            if r.variant == variant:
                return r
        raise KeyError(variant)

    def to_csv(self, path: str | Path, include_timing: bool = True) -> None:
        fields = ["variant", "psnr", "ssim", "lpips_proxy", "id_sim"]
        if include_timing:
            fields.append("seconds_per_image")
        fields.append("error")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(fields)
            for r in self.rows:
                writer.writerow(
                    [r.variant]
                    + [f"{getattr(r, f):.6f}" for f in fields[1:-1]]
                    + [r.error]
                )

    def to_json(self, path: str | Path) -> None:
        payload = {
            "sample_count": self.sample_count,
            "seed": self.seed,
            "rows": [dict(r.__dict__) for r in self.rows],
            "reference": self.reference,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)

    def to_markdown(self) -> str:
        header = "| variant | PSNR↑ | SSIM↑ | LPIPS↓ | ID↑ | time (s)↓ |"
        sep = "|---|---|---|---|---|---|"
        lines = [header, sep]
        for r in self.rows:
            if r.error:
                lines.append(f"| {r.variant} | failed: {r.error} | | | | |")
            else:
                lines.append(
                    f"| {r.variant} | {r.psnr:.2f} | {r.ssim:.3f} | {r.lpips_proxy:.4f} "
                    f"| {r.id_sim:.3f} | {r.seconds_per_image:.4f} |"
                )
        return "\n".join(lines)


# -- inverter factories --------------------------------------------------------


def encoder_inverter(encoder: InversionEncoder, generator: StyleGenerator, level: str) -> Inverter:
    """Per-image reconstruction at one rung of the ladder.

    Each level does only the compute it needs, so per-image latency is
    structurally non-decreasing from ``w`` to ``full``.
    """
    if level not in ("w", "wplus", "full"):
        raise ValueError(f"unknown level {level!r}")

    def run(image: Tensor) -> Tensor:
        with torch.no_grad():
            if level == "w":
                pyramid = encoder.extract_pyramid(image)
                w = encoder.predict_w(pyramid.t1)
                img, _ = generator.synthesize(generator.broadcast(w))
                return img
            result = encoder.invert(image)
            if level == "wplus":
                img, _ = generator.synthesize(result.w_plus)
                return img
            return generator.synthesize_from_feature(result.f, result.w_plus)

    return run


def optimization_inverter(
    generator: StyleGenerator,
    steps: int = 500,
    lr: float = 0.02,
    embedder: Optional[PerceptualEmbedder] = None,
    init: Optional[Tensor] = None,
) -> Inverter:
    embedder = embedder or PerceptualEmbedder()
    if init is None:
        init, _ = generator.latent_statistics(count=10000, seed=generator.config.seed)

    def run(image: Tensor) -> Tensor:
        w, _ = optimize_w(image, generator, steps=steps, lr=lr, init=init, embedder=embedder)
        with torch.no_grad():
            img, _ = generator.synthesize(generator.broadcast(w))
        return img

    return run


def identity_inverter() -> Inverter:
    return lambda image: image


# -- harness --------------------------------------------------------------------


def _eval_images(dataset: PairDataset, seed: int, count: int) -> Tensor:
    pool = dataset.val_idx if len(dataset.val_idx) >= 2 else dataset.train_idx
    rng = np.random.default_rng(seed)
    take = min(count, len(pool))
    idx = np.sort(rng.choice(pool, size=take, replace=False))
    return torch.from_numpy(dataset.images[idx])


def _time_inverter(fn: Inverter, images: Tensor, repetitions: int = 3) -> float:
    """Median over repetitions of mean per-image latency; first call warms up."""
    fn(images[0])
    times = []
    for _ in range(repetitions):
        start = time.perf_counter()
        for i in range(images.shape[0]):
            fn(images[i])
        times.append((time.perf_counter() - start) / images.shape[0])
    return float(np.median(times))


def evaluate(
    variants: dict[str, Inverter],
    dataset: PairDataset,
    seed: int = 0,
    count: int = 32,
    embedder: Optional[PerceptualEmbedder] = None,
    include_timing: bool = True,
    timing_images: int = 8,
    timing_repetitions: int = 3,
) -> MetricReport:
    """Score every variant on a shared sample of evaluation images.

    A failing variant is recorded in its row's ``error`` field; other rows
    still complete.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    embedder = embedder or PerceptualEmbedder()
    images = _eval_images(dataset, seed, count)
    rows = []
    for name, fn in variants.items():
        row = MetricRow(variant=name)
        try:
            # variants manage grad mode themselves (optimization needs autograd)
            recs = torch.stack([fn(images[i]).detach() for i in range(images.shape[0])])
            row.psnr = psnr(images, recs).mean().item()
            row.ssim = ssim(images, recs).mean().item()
            row.lpips_proxy = lpips_proxy(images, recs, embedder).mean().item()
            row.id_sim = id_sim(images, recs, embedder).mean().item()
            if include_timing:
                row.seconds_per_image = _time_inverter(
                    fn, images[: min(timing_images, images.shape[0])], timing_repetitions
                )
        except Exception as exc:  # recorded, not fatal
            row.error = str(exc)
        rows.append(row)
    return MetricReport(rows=rows, sample_count=images.shape[0], seed=seed)


@dataclass
class AblationPlan:
    """Training budgets for the seven-row ablation study."""

    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    optimization_steps: int = 300
    optimization_lr: float = 0.02
    eval_count: int = 32
    include_timing: bool = True
    timing_images: int = 2
    timing_repetitions: int = 3


def ablate(
    generator: StyleGenerator,
    align_model: AlignModel,
    dataset: PairDataset,
    plan: AblationPlan | None = None,
    encoder_config: Optional[EncoderConfig] = None,
    checkpoints: Optional[dict[str, InversionEncoder]] = None,
) -> MetricReport:
    """The seven-row study: optimization baseline, alignment ablation, and
    each attention block removed in turn.

    ``checkpoints`` may supply pre-trained encoders keyed by "full",
    "no_align", "no_wplus_attention", "no_f_attention"; missing ones are
    trained here with the plan's budget.
    """
    plan = plan or AblationPlan()
    checkpoints = dict(checkpoints or {})
    base_ecfg = encoder_config or EncoderConfig.for_generator(
        generator.config, seed=plan.train_cfg.seed
    )

    def get_encoder(key: str, **ecfg_overrides):
        if key in checkpoints:
            return checkpoints[key]
        ecfg = EncoderConfig.from_dict({**base_ecfg.to_dict(), **ecfg_overrides})
        cfg = plan.train_cfg
        if key == "no_align":
            weights = type(cfg.weights).from_dict({**cfg.weights.to_dict(), "lambda_align": 0.0})
            cfg = TrainConfig.from_dict({**cfg.to_dict(), "weights": weights.to_dict()})
        encoder, _ = train_encoder(generator, align_model, dataset, cfg, ecfg)
        checkpoints[key] = encoder
        return encoder

    full = get_encoder("full")
    no_align = get_encoder("no_align")
    no_wplus = get_encoder("no_wplus_attention", use_wplus_attention=False)
    no_f = get_encoder("no_f_attention", use_f_attention=False)

    variants = {
        "optimization": optimization_inverter(
            generator, steps=plan.optimization_steps, lr=plan.optimization_lr
        ),
        "w_no_align": encoder_inverter(no_align, generator, "w"),
        "w": encoder_inverter(full, generator, "w"),
        "wplus_no_attention": encoder_inverter(no_wplus, generator, "wplus"),
        "wplus": encoder_inverter(full, generator, "wplus"),
        "full_no_f_attention": encoder_inverter(no_f, generator, "full"),
        "full": encoder_inverter(full, generator, "full"),
    }
    report = evaluate(
        variants,
        dataset,
        seed=plan.train_cfg.seed,
        count=plan.eval_count,
        include_timing=plan.include_timing,
        timing_images=plan.timing_images,
        timing_repetitions=plan.timing_repetitions,
    )
    assert [r.variant for r in report.rows] == list(ABLATION_ROWS)
    return report
