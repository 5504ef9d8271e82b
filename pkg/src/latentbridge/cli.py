"""Command line client: each subcommand is a thin wrapper over the package.

Artifacts live under the run directory:

    run_dir/
      generator/ align/ encoder/     checkpoints (manifest + blobs)
      pairs.npz                      sampled (image, latent) dataset
      align_history.csv encoder_history.csv
      directions/                    direction store
      inversions/<name>/             w/w+/f blobs and reconstruction PNGs
      edits/                         edited images
      reports/                       evaluation and ablation tables

Exit codes: 0 success, 1 user error, 2 internal error.
"""

from __future__ import annotations

import json
import sys
import traceback
from pathlib import Path

import click
import numpy as np
import torch

from . import alignment as alignment_mod
from . import training as training_mod
from .alignment import AlignConfig, AlignModel, pretrain, validation_retrieval
from .baselines import optimize_w
from .checkpoint import load_checkpoint, load_into_module, save_checkpoint
from .config import RunConfig
from .data import load_image, save_image
from .editing import (
    DirectionStore,
    EditRequest,
    edit_image,
    fit_pca_directions,
    fit_svm_direction,
    synthetic_attribute_labels,
)
from .encoder import EncoderConfig, InversionEncoder
from .errors import ConfigError, ShapeError
from .evaluation import AblationPlan, ablate, encoder_inverter, evaluate, optimization_inverter
from .generator import GeneratorConfig, PairDataset, StyleGenerator
from .service import ServiceBundle, create_app
from .training import TrainConfig, train_encoder

USER_ERRORS = (ConfigError, ShapeError, FileNotFoundError, ValueError, KeyError)


class Workspace:
    """Lazy loader for run-directory artifacts with actionable errors."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.run_dir = Path(cfg.run_dir)

    def _require(self, path: Path, hint: str) -> Path:
        if not path.exists():
            raise FileNotFoundError(f"{path} not found; run `latentbridge {hint}` first")
        return path

    def generator(self) -> StyleGenerator:
        ck = load_checkpoint(self._require(self.run_dir / "generator", "init-generator"))
        gen = StyleGenerator(GeneratorConfig.from_dict(ck.config))
        load_into_module(ck, gen)
        return gen

    def pairs(self) -> PairDataset:
        if self.cfg.data.pairs_path:
            return PairDataset.load(self.cfg.data.pairs_path)
        return PairDataset.load(self._require(self.run_dir / "pairs.npz", "gen-pairs"))

    def align(self) -> AlignModel:
        ck = load_checkpoint(self._require(self.run_dir / "align", "pretrain-align"))
        model = AlignModel(AlignConfig.from_dict(ck.config))
        load_into_module(ck, model)
        return model.freeze()

    def encoder(self) -> InversionEncoder:
        ck = load_checkpoint(self._require(self.run_dir / "encoder", "train-encoder"))
        enc = InversionEncoder(EncoderConfig.from_dict(ck.config))
        load_into_module(ck, enc)
        enc.eval()
        enc.requires_grad_(False)
        return enc

    def directions(self) -> DirectionStore:
        return DirectionStore.load(self._require(self.run_dir / "directions", "fit-directions"))


@click.group(name="latentbridge")
@click.option("--config", "config_path", type=click.Path(), default=None, help="Run config JSON.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", type=click.Path(), default=None, help="Override the run directory.")
@click.pass_context
def cli(ctx, config_path, seed, out):
    """Inversion and editing toolkit for the bundled toy style generator."""
    cfg = RunConfig.load(config_path) if config_path else RunConfig()
    if seed is not None:
        cfg.seed = seed
    if out is not None:
        cfg.run_dir = out
    ctx.obj = Workspace(cfg)


@cli.command("init-generator")
@click.pass_obj
def init_generator(ws: Workspace):
    """Create and freeze the toy generator checkpoint."""
    gcfg = ws.cfg.generator
    gcfg.seed = ws.cfg.seed if ws.cfg.seed else gcfg.seed
    gen = StyleGenerator(gcfg)
    save_checkpoint(ws.run_dir / "generator", "generator", gcfg.to_dict(), gen, seed=gcfg.seed)
    click.echo(f"generator checkpoint written to {ws.run_dir / 'generator'}")


@cli.command("gen-pairs")
@click.option("--count", type=int, default=None, help="Number of pairs (default from config).")
@click.pass_obj
def gen_pairs(ws: Workspace, count):
    """Sample (image, latent) pairs from the frozen generator."""
    gen = ws.generator()
    count = count or ws.cfg.data.pairs_count
    pairs = gen.sample_pairs(count, seed=ws.cfg.data.pairs_seed)
    pairs.save(ws.run_dir / "pairs")
    click.echo(f"{count} pairs ({pairs.nbytes() / 1e6:.0f} MB) written to {ws.run_dir / 'pairs.npz'}")


@cli.command("pretrain-align")
@click.option("--steps", type=int, default=None)
@click.pass_obj
def pretrain_align(ws: Workspace, steps):
    """Contrastive pretraining of the image/latent alignment module."""
    pairs = ws.pairs()
    acfg = ws.cfg.align
    if steps is not None:
        acfg = AlignConfig.from_dict({**acfg.to_dict(), "steps": steps})
    model, history = pretrain(pairs, acfg)
    save_checkpoint(ws.run_dir / "align", "align", acfg.to_dict(), model, seed=acfg.seed)
    alignment_mod.write_history_csv(history, ws.run_dir / "align_history.csv")
    acc = validation_retrieval(model, pairs)
    click.echo(f"alignment pretrained; validation retrieval top-1 = {acc:.3f}")


@cli.command("train-encoder")
@click.option("--steps", type=int, default=None)
@click.option("--checkpoint-every", type=int, default=0, help="Also save every N steps.")
@click.pass_obj
def train_encoder_cmd(ws: Workspace, steps, checkpoint_every):
    """Train the inversion encoder against the frozen generator and align model."""
    gen = ws.generator()
    align = ws.align()
    pairs = ws.pairs()
    tcfg = ws.cfg.training
    if steps is not None:
        tcfg = TrainConfig.from_dict({**tcfg.to_dict(), "steps": steps})
    ecfg = ws.cfg.encoder_config()

    def save_step(step, encoder):
        save_checkpoint(
            ws.run_dir / f"encoder_step_{step}", "encoder", ecfg.to_dict(), encoder, seed=tcfg.seed
        )

    encoder, history = train_encoder(
        gen, align, pairs, tcfg, ecfg,
        checkpoint_every=checkpoint_every,
        checkpoint_fn=save_step if checkpoint_every else None,
    )
    save_checkpoint(ws.run_dir / "encoder", "encoder", ecfg.to_dict(), encoder, seed=tcfg.seed)
    training_mod.write_history_csv(history, ws.run_dir / "encoder_history.csv")
    last = history[-1]
    click.echo(
        "encoder trained; val PSNR w/w+/f = "
        f"{last['val_psnr_w']:.2f}/{last['val_psnr_wplus']:.2f}/{last['val_psnr_f']:.2f}"
    )


@cli.command("fit-directions")
@click.argument("method", type=click.Choice(["svm", "pca"]))
@click.option("--count", type=int, default=None, help="Latent samples to fit on.")
@click.pass_obj
def fit_directions(ws: Workspace, method, count):
    """Discover semantic directions from sampled latents."""
    gen = ws.generator()
    ecfg = ws.cfg.editing
    count = count or ecfg.sample_count
    g = torch.Generator().manual_seed(ecfg.seed)
    with torch.no_grad():
        w = gen.map_latent(torch.randn(count, gen.config.latent_dim, generator=g))
    store_dir = ws.run_dir / "directions"
    store = DirectionStore.load(store_dir) if store_dir.exists() else DirectionStore()
    if method == "pca":
        for d in fit_pca_directions(w.numpy(), ecfg.pca_components):
            store.add(d)
    else:
        for i in range(ecfg.svm_attributes):
            labels = synthetic_attribute_labels(w.numpy(), seed=ecfg.seed + i)
            store.add(fit_svm_direction(w.numpy(), labels, name=f"attr{i}"))
    store.save(store_dir)
    click.echo(f"{len(store)} directions in {store_dir}: {', '.join(store.names())}")


def _write_inversion(out_dir: Path, result, images):
    out_dir.mkdir(parents=True, exist_ok=True)
    result.w.numpy().astype("<f4").tofile(out_dir / "w.bin")
    result.w_plus.numpy().astype("<f4").tofile(out_dir / "wplus.bin")
    result.f.values.numpy().astype("<f4").tofile(out_dir / "f.bin")
    img_w, img_wp, img_f = images
    save_image(img_w, out_dir / "rec_w.png")
    save_image(img_wp, out_dir / "rec_wplus.png")
    save_image(img_f, out_dir / "rec_f.png")


@cli.command("invert")
@click.argument("image_path", type=click.Path(exists=True))
@click.pass_obj
def invert_cmd(ws: Workspace, image_path):
    """Invert one image; write latent blobs and the reconstruction ladder."""
    gen = ws.generator()
    enc = ws.encoder()
    image = load_image(image_path, gen.config.image_resolution)
    with torch.no_grad():
        result = enc.invert(image)
        images = gen.synthesize_ladder(result.w, result.w_plus, result.f)
    out_dir = ws.run_dir / "inversions" / Path(image_path).stem
    _write_inversion(out_dir, result, images)
    click.echo(f"inversion written to {out_dir}")


@cli.command("edit")
@click.argument("image_path", type=click.Path(exists=True))
@click.option("--direction", required=True)
@click.option("--alpha", type=float, required=True)
@click.option("--mode", type=click.Choice(["latent_only", "latent_and_feature"]), default="latent_and_feature")
@click.pass_obj
def edit_cmd(ws: Workspace, image_path, direction, alpha, mode):
    """Invert one image and apply a named semantic edit."""
    gen = ws.generator()
    enc = ws.encoder()
    store = ws.directions()
    image = load_image(image_path, gen.config.image_resolution)
    with torch.no_grad():
        result = enc.invert(image)
        out = edit_image(result, gen, store, EditRequest(direction, alpha, mode))
    out_dir = ws.run_dir / "edits"
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{Path(image_path).stem}_{direction}_{alpha:+.2f}_{mode}.png"
    save_image(out, path)
    click.echo(f"edit written to {path}")


@cli.command("eval")
@click.option("--count", type=int, default=32)
@click.option("--skip-timing", is_flag=True, help="Omit the timing column (deterministic output).")
@click.option("--opt-steps", type=int, default=0, help="Include the optimization baseline row.")
@click.pass_obj
def eval_cmd(ws: Workspace, count, skip_timing, opt_steps):
    """Score the encoder ladder (and optionally the optimization baseline)."""
    gen = ws.generator()
    enc = ws.encoder()
    pairs = ws.pairs()
    variants = {
        "w": encoder_inverter(enc, gen, "w"),
        "wplus": encoder_inverter(enc, gen, "wplus"),
        "full": encoder_inverter(enc, gen, "full"),
    }
    if opt_steps > 0:
        variants["optimization"] = optimization_inverter(gen, steps=opt_steps)
    report = evaluate(
        variants, pairs, seed=ws.cfg.seed, count=count, include_timing=not skip_timing
    )
    out_dir = ws.run_dir / "reports"
    out_dir.mkdir(parents=True, exist_ok=True)
    report.to_csv(out_dir / "eval.csv", include_timing=not skip_timing)
    report.to_json(out_dir / "eval.json")
    (out_dir / "eval.md").write_text(report.to_markdown() + "\n")
    click.echo(report.to_markdown())


@cli.command("ablate")
@click.option("--steps", type=int, default=400, help="Training steps per ablation variant.")
@click.option("--opt-steps", type=int, default=300)
@click.option("--count", type=int, default=32)
@click.option("--skip-timing", is_flag=True)
@click.pass_obj
def ablate_cmd(ws: Workspace, steps, opt_steps, count, skip_timing):
    """Run the seven-row ablation study (trains the variants it needs)."""
    gen = ws.generator()
    align = ws.align()
    pairs = ws.pairs()
    tcfg = TrainConfig.from_dict({**ws.cfg.training.to_dict(), "steps": steps})
    plan = AblationPlan(
        train_cfg=tcfg,
        optimization_steps=opt_steps,
        eval_count=count,
        include_timing=not skip_timing,
    )
    report = ablate(gen, align, pairs, plan, encoder_config=ws.cfg.encoder_config())
    out_dir = ws.run_dir / "reports"
    out_dir.mkdir(parents=True, exist_ok=True)
    report.to_csv(out_dir / "ablation.csv", include_timing=not skip_timing)
    report.to_json(out_dir / "ablation.json")
    (out_dir / "ablation.md").write_text(report.to_markdown() + "\n")
    click.echo(report.to_markdown())


@cli.command("serve")
@click.option("--port", type=int, default=8000)
@click.option("--host", default="127.0.0.1")
@click.pass_obj
def serve(ws: Workspace, port, host):
    """Start the HTTP editing service (and static UI if built)."""
    import uvicorn

    bundle = ServiceBundle(
        generator=ws.generator(), encoder=ws.encoder(), directions=ws.directions()
    )
    frontend = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    app = create_app(bundle, frontend_dir=frontend if frontend.is_dir() else None)
    uvicorn.run(app, host=host, port=port)


def main(argv=None) -> int:
    """Invoke the CLI, mapping exception classes onto exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.NoArgsIsHelpError as exc:
        click.echo(exc.format_message())
        return 0
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        return 1
    except USER_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


def entrypoint():
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entrypoint()
