import numpy as np
import pytest
import torch

from latentbridge.editing import (
    Direction,
    DirectionStore,
    EditRequest,
    apply_latent_edit,
    edit_image,
    feature_edit,
    fit_pca_directions,
    fit_svm_direction,
    synthetic_attribute_labels,
)
from latentbridge.encoder import EncoderConfig, InversionEncoder
from latentbridge.errors import ShapeError
from latentbridge.generator import FeatureMap, GeneratorConfig, LinearGenerator, StyleGenerator


def _planted_svm_data(d=16, n=400, seed=0, margin=0.3):
    rng = np.random.default_rng(seed)
    axis = rng.standard_normal(d)
    axis /= np.linalg.norm(axis)
    xs, ys = [], []
    while len(xs) < n:
        x = rng.standard_normal(d)
        proj = x @ axis
        if abs(proj) > margin:
            xs.append(x)
            ys.append(1 if proj > 0 else -1)
    return np.array(xs), np.array(ys), axis


class TestSvmDirection:
    def test_recovers_planted_normal(self):
        x, y, axis = _planted_svm_data(seed=1)
        direction = fit_svm_direction(x, y, "attr")
        cos = float(direction.vector.numpy() @ axis)
        assert cos >= 0.95

    def test_orientation_flips_with_labels(self):
        x, y, _ = _planted_svm_data(seed=2)
        d1 = fit_svm_direction(x, y)
        d2 = fit_svm_direction(x, -y)
        cos = float(d1.vector.numpy() @ d2.vector.numpy())
        assert cos < -0.99

    def test_duplicates_identical(self):
        x, y, _ = _planted_svm_data(seed=3, n=120)
        d1 = fit_svm_direction(x, y)
        d2 = fit_svm_direction(np.concatenate([x, x]), np.concatenate([y, y]))
        assert np.allclose(d1.vector.numpy(), d2.vector.numpy(), atol=1e-4)

    def test_recovery_over_seeds(self):
        hits = 0
        for seed in range(5):
            x, y, axis = _planted_svm_data(seed=seed, n=300)
            d = fit_svm_direction(x, y)
            if float(d.vector.numpy() @ axis) >= 0.95:
                hits += 1
        assert hits == 5

    def test_single_class_rejected(self):
        x = np.random.default_rng(0).standard_normal((10, 4))
        with pytest.raises(ValueError):
            fit_svm_direction(x, np.ones(10))

    def test_unit_norm_and_metadata(self):
        x, y, _ = _planted_svm_data(seed=4, n=100)
        d = fit_svm_direction(x, y)
        assert abs(d.vector.norm().item() - 1.0) < 1e-5
        assert d.method == "svm"
        assert d.metadata["training_size"] == 100
        assert d.sigma > 0


class TestPcaDirections:
    def test_recovers_dominant_axis(self):
        rng = np.random.default_rng(5)
        scales = np.ones(8)
        scales[0] = 3.0  # variance 9 vs 1
        x = rng.standard_normal((500, 8)) * scales
        dirs = fit_pca_directions(x, 3)
        cos = abs(float(dirs[0].vector.numpy()[0]))
        assert cos >= 0.95

    def test_orthonormal_set(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((100, 10))
        dirs = fit_pca_directions(x, 5)
        mat = np.stack([d.vector.numpy() for d in dirs])
        gram = mat @ mat.T
        assert np.abs(gram - np.eye(5)).max() < 1e-6

    def test_two_points_gives_difference_axis(self):
        a = np.zeros(6)
        b = np.zeros(6)
        b[2] = 2.0
        dirs = fit_pca_directions(np.stack([a, b]), 1)
        vec = dirs[0].vector.numpy()
        expected = (b - a) / np.linalg.norm(b - a)
        assert abs(abs(vec @ expected) - 1.0) < 1e-6

    def test_sign_convention(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((50, 4))
        for d in fit_pca_directions(x, 4):
            v = d.vector.numpy()
            assert v[np.argmax(np.abs(v))] > 0

    def test_rank_error(self):
        x = np.zeros((10, 4))
        x[:, 0] = np.arange(10)
        with pytest.raises(ValueError):
            fit_pca_directions(x, 2)

    def test_k_exceeds_dim(self):
        with pytest.raises(ValueError):
            fit_pca_directions(np.zeros((10, 4)), 5)

    def test_recovery_over_seeds(self):
        hits = 0
        for seed in range(5):
            rng = np.random.default_rng(seed + 100)
            scales = np.ones(8)
            scales[0] = 3.0
            x = rng.standard_normal((400, 8)) * scales
            d0 = fit_pca_directions(x, 1)[0]
            if abs(float(d0.vector.numpy()[0])) >= 0.95:
                hits += 1
        assert hits == 5


class TestSyntheticLabels:
    def test_balanced_and_deterministic(self):
        rng = np.random.default_rng(8)
        w = rng.standard_normal((101, 16))
        y1 = synthetic_attribute_labels(w, seed=3)
        y2 = synthetic_attribute_labels(w, seed=3)
        assert np.array_equal(y1, y2)
        assert set(y1.tolist()) == {-1, 1}
        assert abs(int(y1.sum())) <= 1


def _direction(d=16, seed=9, sigma=1.5):
    g = torch.Generator().manual_seed(seed)
    v = torch.randn(d, generator=g)
    v = v / v.norm()
    return Direction(name="dir", vector=v, sigma=sigma, method="pca")


class TestApplyLatentEdit:
    def test_zero_alpha_identity(self):
        w_plus = torch.randn(10, 16, generator=torch.Generator().manual_seed(10))
        d = _direction()
        assert torch.equal(apply_latent_edit(w_plus, d, 0.0), w_plus)

    def test_roundtrip(self):
        w_plus = torch.randn(10, 16, generator=torch.Generator().manual_seed(11))
        d = _direction()
        back = apply_latent_edit(apply_latent_edit(w_plus, d, 2.0), d, -2.0)
        assert torch.allclose(back, w_plus, atol=1e-6)

    def test_projection_moves_by_sigma(self):
        w_plus = torch.randn(10, 16, generator=torch.Generator().manual_seed(12))
        d = _direction(sigma=2.5)
        edited = apply_latent_edit(w_plus, d, 1.0)
        shift = (edited - w_plus) @ d.vector
        assert torch.allclose(shift, torch.full((10,), 2.5), atol=1e-5)

    def test_dim_mismatch(self):
        with pytest.raises(ShapeError):
            apply_latent_edit(torch.zeros(10, 8), _direction(d=16), 1.0)


class TestFeatureEdit:
    def test_identity_when_unedited(self):
        gen = LinearGenerator(seed=2)
        g = torch.Generator().manual_seed(13)
        w_plus = torch.randn(gen.num_styles, gen.latent_dim, generator=g, dtype=torch.float64)
        f = gen.layer_feature(w_plus)
        out = feature_edit(f, gen, w_plus, w_plus)
        assert torch.equal(out.values, f.values)

    def test_linear_oracle(self):
        gen = LinearGenerator(seed=3)
        g = torch.Generator().manual_seed(14)
        w_plus = torch.randn(gen.num_styles, gen.latent_dim, generator=g, dtype=torch.float64)
        edited = w_plus + 0.3 * torch.randn(w_plus.shape, generator=g, dtype=torch.float64)
        f = FeatureMap(torch.randn(gen.feature_shape, generator=g, dtype=torch.float64), 1)
        out = feature_edit(f, gen, w_plus, edited)
        expected = f.values + (gen.A @ (edited - w_plus).reshape(-1)).reshape(gen.feature_shape)
        assert torch.allclose(out.values, expected, atol=1e-10)

    def test_telescoping_inverse(self):
        gen = StyleGenerator(GeneratorConfig(image_resolution=16, latent_dim=16, f_layer_index=3, seed=4))
        g = torch.Generator().manual_seed(15)
        w_plus = gen.broadcast(gen.map_latent(torch.randn(16, generator=g)))
        edited = w_plus + 0.2 * torch.randn(w_plus.shape, generator=g)
        f = gen.layer_feature(w_plus)
        there = feature_edit(f, gen, w_plus, edited)
        back = feature_edit(there, gen, edited, w_plus)
        assert (back.values - f.values).abs().max() < 1e-6


@pytest.fixture(scope="module")
def edit_setup():
    gcfg = GeneratorConfig(image_resolution=16, latent_dim=16, f_layer_index=3, seed=5)
    gen = StyleGenerator(gcfg)
    enc = InversionEncoder(EncoderConfig.for_generator(gcfg, heads=2, base_channels=8, map2style_width=8))
    img = torch.rand(3, 16, 16, generator=torch.Generator().manual_seed(16)) * 2 - 1
    result = enc.invert(img)
    store = DirectionStore([_direction(d=16, seed=17)])
    return gen, result, store


class TestEditImage:
    def test_zero_alpha_matches_reconstructions(self, edit_setup):
        gen, result, store = edit_setup
        rec_latent, _ = gen.synthesize(result.w_plus)
        rec_full = gen.synthesize_from_feature(result.f, result.w_plus)
        out_latent = edit_image(result, gen, store, EditRequest("dir", 0.0, "latent_only"))
        out_full = edit_image(result, gen, store, EditRequest("dir", 0.0, "latent_and_feature"))
        assert torch.equal(out_latent, rec_latent)
        assert torch.equal(out_full, rec_full)

    def test_nonzero_alpha_changes_image(self, edit_setup):
        gen, result, store = edit_setup
        base = edit_image(result, gen, store, EditRequest("dir", 0.0, "latent_and_feature"))
        for alpha in (-2.0, 2.0):
            moved = edit_image(result, gen, store, EditRequest("dir", alpha, "latent_and_feature"))
            assert (moved - base).abs().max() > 1e-3

    def test_unknown_direction(self, edit_setup):
        gen, result, store = edit_setup
        with pytest.raises(KeyError):
            edit_image(result, gen, store, EditRequest("nope", 1.0, "latent_only"))

    def test_bad_mode_rejected(self):
        with pytest.raises(ValueError):
            EditRequest("dir", 1.0, "both")


class TestDirectionStore:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(18)
        x = rng.standard_normal((60, 12))
        dirs = fit_pca_directions(x, 3) + [fit_svm_direction(*_planted_svm_data(d=12, n=80, seed=19)[:2])]
        store = DirectionStore(dirs)
        store.save(tmp_path / "dirs")
        back = DirectionStore.load(tmp_path / "dirs")
        assert back.names() == store.names()
        for name in store.names():
            assert torch.equal(back[name].vector, store[name].vector)
            assert back[name].sigma == store[name].sigma
            assert back[name].method == store[name].method

    def test_non_unit_rejected(self):
        with pytest.raises(ValueError):
            Direction(name="bad", vector=torch.ones(4), sigma=1.0, method="pca")
