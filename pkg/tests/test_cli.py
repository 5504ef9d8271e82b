import json
from pathlib import Path

import numpy as np
import pytest

from latentbridge.cli import main

TINY_CONFIG = {
    "seed": 0,
    "generator": {"image_resolution": 16, "latent_dim": 16, "f_layer_index": 3, "seed": 0},
    "align": {
        "embed_dim": 16,
        "image_resolution": 16,
        "latent_dim": 16,
        "latent_tokens": 4,
        "latent_width": 16,
        "image_base_channels": 8,
        "batch_size": 16,
        "steps": 40,
        "seed": 0,
    },
    "encoder_overrides": {"heads": 2, "base_channels": 8, "map2style_width": 8, "seed": 0},
    "training": {"steps": 6, "batch_size": 8, "eval_every": 3, "val_batch": 6, "seed": 0},
    "data": {"pairs_count": 120, "pairs_seed": 0},
    "editing": {"pca_components": 2, "svm_attributes": 1, "sample_count": 200, "seed": 0},
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = root / "config.json"
    payload = dict(TINY_CONFIG)
    payload["run_dir"] = str(root / "run")
    config.write_text(json.dumps(payload))
    return root, config


def _run(config, *args):
    return main(["--config", str(config), *args])


@pytest.fixture(scope="module")
def pipeline(workdir):
    root, config = workdir
    assert _run(config, "init-generator") == 0
    assert _run(config, "gen-pairs") == 0
    assert _run(config, "pretrain-align") == 0
    assert _run(config, "train-encoder") == 0
    assert _run(config, "fit-directions", "pca") == 0
    assert _run(config, "fit-directions", "svm") == 0
    return root, config


class TestPipelineArtifacts:
    def test_run_layout(self, pipeline):
        root, _ = pipeline
        run = root / "run"
        assert (run / "generator" / "manifest.json").exists()
        assert (run / "pairs.npz").exists()
        assert (run / "align" / "manifest.json").exists()
        assert (run / "align_history.csv").exists()
        assert (run / "encoder" / "manifest.json").exists()
        assert (run / "encoder_history.csv").exists()
        assert (run / "directions" / "directions.json").exists()

    def test_directions_merged(self, pipeline):
        root, _ = pipeline
        entries = json.loads((root / "run" / "directions" / "directions.json").read_text())
        names = {e["name"] for e in entries}
        assert names == {"pca0", "pca1", "attr0"}


@pytest.fixture(scope="module")
def sample_png(pipeline):
    root, _ = pipeline
    import torch

    from latentbridge.data import save_image
    from latentbridge.generator import PairDataset

    pairs = PairDataset.load(root / "run" / "pairs.npz")
    path = root / "sample.png"
    save_image(torch.from_numpy(pairs.images[0]), path)
    return path


class TestInvertAndEdit:
    def test_invert_writes_blobs_and_pngs(self, pipeline, sample_png):
        root, config = pipeline
        assert _run(config, "invert", str(sample_png)) == 0
        out = root / "run" / "inversions" / "sample"
        for name in ("w.bin", "wplus.bin", "f.bin", "rec_w.png", "rec_wplus.png", "rec_f.png"):
            assert (out / name).exists()
        w = np.fromfile(out / "w.bin", dtype="<f4")
        assert w.shape == (16,)
        wplus = np.fromfile(out / "wplus.bin", dtype="<f4")
        assert wplus.shape == (6 * 16,)

    def test_zero_alpha_edit_matches_reconstruction_bytes(self, pipeline, sample_png):
        root, config = pipeline
        assert _run(config, "invert", str(sample_png)) == 0
        assert (
            _run(config, "edit", str(sample_png), "--direction", "pca0", "--alpha", "0", "--mode", "latent_and_feature")
            == 0
        )
        rec = (root / "run" / "inversions" / "sample" / "rec_f.png").read_bytes()
        edited = (root / "run" / "edits" / "sample_pca0_+0.00_latent_and_feature.png").read_bytes()
        assert edited == rec

    def test_nonzero_edit_writes_different_image(self, pipeline, sample_png):
        root, config = pipeline
        assert (
            _run(config, "edit", str(sample_png), "--direction", "pca0", "--alpha", "2.0", "--mode", "latent_only")
            == 0
        )
        rec = (root / "run" / "inversions" / "sample" / "rec_wplus.png").read_bytes()
        edited = (root / "run" / "edits" / "sample_pca0_+2.00_latent_only.png").read_bytes()
        assert edited != rec


class TestEval:
    def test_eval_writes_reports(self, pipeline):
        root, config = pipeline
        assert _run(config, "eval", "--count", "6", "--skip-timing") == 0
        reports = root / "run" / "reports"
        assert (reports / "eval.csv").exists()
        assert (reports / "eval.json").exists()
        header = (reports / "eval.csv").read_text().splitlines()[0]
        assert header == "variant,psnr,ssim,lpips_proxy,id_sim,error"

    def test_eval_deterministic_without_timing(self, pipeline):
        root, config = pipeline
        assert _run(config, "eval", "--count", "6", "--skip-timing") == 0
        first = (root / "run" / "reports" / "eval.csv").read_bytes()
        assert _run(config, "eval", "--count", "6", "--skip-timing") == 0
        second = (root / "run" / "reports" / "eval.csv").read_bytes()
        assert first == second


class TestErrors:
    def test_unknown_flag_usage_error(self, capsys):
        assert main(["--bogus"]) == 1
        assert "Usage" in capsys.readouterr().err

    def test_missing_artifact_is_user_error(self, tmp_path, capsys):
        config = tmp_path / "config.json"
        payload = dict(TINY_CONFIG)
        payload["run_dir"] = str(tmp_path / "empty_run")
        config.write_text(json.dumps(payload))
        assert main(["--config", str(config), "invert", str(config)]) == 1
        assert "init-generator" in capsys.readouterr().err

    def test_bad_config_is_user_error(self, tmp_path, capsys):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"generator": {"latent_dims": 4}}))
        assert main(["--config", str(config), "init-generator"]) == 1
        err = capsys.readouterr().err
        assert "unknown keys" in err
