#!/usr/bin/env python3
"""Regenerate the shipped fixture run (tiny models, deterministic seeds).

The fixture backs the byte-reproducibility test of `eval --skip-timing` and
gives the service/UI something to serve without training at full toy scale.
Outputs land in fixtures/run/ plus a sample PNG and the frozen eval CSV.
"""

import json
import shutil
import sys
from pathlib import Path

import torch

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from latentbridge.cli import main  # noqa: E402
from latentbridge.data import save_image  # noqa: E402
from latentbridge.generator import PairDataset  # noqa: E402

FIXTURE_CONFIG = {
    "seed": 0,
    "run_dir": str(ROOT / "fixtures" / "run"),
    "generator": {"image_resolution": 16, "latent_dim": 16, "f_layer_index": 3, "seed": 11},
    "align": {
        "embed_dim": 16,
        "image_resolution": 16,
        "latent_dim": 16,
        "latent_tokens": 4,
        "latent_width": 16,
        "image_base_channels": 8,
        "batch_size": 32,
        "steps": 150,
        "seed": 11,
    },
    "encoder_overrides": {"heads": 2, "base_channels": 8, "map2style_width": 8, "seed": 11},
    "training": {
        "steps": 120,
        "batch_size": 8,
        "learning_rate": 0.001,
        "eval_every": 40,
        "val_batch": 8,
        "seed": 11,
    },
    "data": {"pairs_count": 160, "pairs_seed": 11},
    "editing": {"pca_components": 2, "svm_attributes": 1, "sample_count": 300, "seed": 11},
}


def run() -> None:
    fixtures = ROOT / "fixtures"
    if (fixtures / "run").exists():
        shutil.rmtree(fixtures / "run")
    fixtures.mkdir(exist_ok=True)
    config_path = fixtures / "config.json"
    config_path.write_text(json.dumps(FIXTURE_CONFIG, indent=2))

    for cmd in (
        ["init-generator"],
        ["gen-pairs"],
        ["pretrain-align"],
        ["train-encoder"],
        ["fit-directions", "pca"],
        ["fit-directions", "svm"],
        ["eval", "--count", "8", "--skip-timing"],
    ):
        rc = main(["--config", str(config_path), *cmd])
        if rc != 0:
            raise SystemExit(f"fixture step {cmd} failed with exit code {rc}")

    pairs = PairDataset.load(fixtures / "run" / "pairs.npz")
    save_image(torch.from_numpy(pairs.images[int(pairs.val_idx[0])]), fixtures / "sample.png")
    # freeze the deterministic eval table next to the run it came from
    shutil.copyfile(fixtures / "run" / "reports" / "eval.csv", fixtures / "eval_expected.csv")
    print("fixtures written to", fixtures)


if __name__ == "__main__":
    run()
