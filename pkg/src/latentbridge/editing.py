"""Semantic direction discovery and edits in latent and feature space.

Directions live in the foundation latent space and are broadcast to every
style row when applied. Each direction carries a sigma scale (the std of
sampled-latent projections onto it) so edit magnitudes are comparable across
directions. Feature-space edits transplant the generator's own layer-feature
difference between the edited and original latents onto the predicted feature.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
import torch
from sklearn.svm import LinearSVC
from torch import Tensor

from .errors import ShapeError
from .generator import FeatureMap

MODES = ("latent_only", "latent_and_feature")


@dataclass
class Direction:
    name: str
    vector: Tensor  # unit-norm, length d
    sigma: float
    method: str  # "svm" | "pca"
    space: str = "w"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        norm = self.vector.norm().item()
        if abs(norm - 1.0) > 1e-5:
            raise ValueError(f"direction {self.name!r} is not unit-norm (|v|={norm})")


@dataclass
class EditRequest:
    direction: str
    alpha: float
    mode: str = "latent_and_feature"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


def _as_array(latents) -> np.ndarray:
    if isinstance(latents, Tensor):
        return latents.detach().cpu().numpy().astype(np.float64)
    return np.asarray(latents, dtype=np.float64)


def fit_svm_direction(latents, labels, name: str = "svm") -> Direction:
    """Hyperplane normal of a linear SVM, oriented toward the +1 class."""
    x = _as_array(latents)
    y = np.asarray(labels)
    classes, counts = np.unique(y, return_counts=True)
    if set(classes.tolist()) != {-1, 1}:
        raise ValueError(f"labels must contain both classes -1 and +1, got {classes.tolist()}")
    if counts.min() < 2:
        raise ValueError("need at least 2 samples per class")
    svc = LinearSVC(C=1.0, loss="hinge", max_iter=50000, tol=1e-6, random_state=0)
    svc.fit(x, y)
    weight = svc.coef_[0]
    norm = np.linalg.norm(weight)
    if norm == 0:
        raise ValueError("degenerate separating hyperplane")
    vec = weight / norm
    sigma = float((x @ vec).std())
    return Direction(
        name=name,
        vector=torch.from_numpy(vec.astype(np.float32)),
        sigma=sigma,
        method="svm",
        metadata={"training_size": int(len(x)), "margin": float(2.0 / norm)},
    )


def fit_pca_directions(latents, k: int, name_prefix: str = "pca") -> list[Direction]:
    """Top-k principal axes of mean-centered latents.

    Signs are fixed so each axis's largest-magnitude coordinate is positive.
    """
    x = _as_array(latents)
    n, d = x.shape
    if k > d:
        raise ValueError(f"k={k} exceeds latent dimension {d}")
    if n < k + 1:
        raise ValueError(f"need at least {k + 1} samples for {k} components, got {n}")
    centered = x - x.mean(axis=0)
    if np.linalg.matrix_rank(centered) < k:
        raise ValueError(f"latents have rank below {k}")
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    directions = []
    for i in range(k):
        vec = vt[i]
        if vec[np.argmax(np.abs(vec))] < 0:
            vec = -vec
        sigma = float((centered @ vec).std())
        directions.append(
            Direction(
                name=f"{name_prefix}{i}",
                vector=torch.from_numpy(vec.astype(np.float32)),
                sigma=sigma,
                method="pca",
                metadata={"training_size": int(n), "eigenvalue": float(s[i] ** 2 / n)},
            )
        )
    return directions


def synthetic_attribute_labels(latents, seed: int = 0) -> np.ndarray:
    """Balanced +-1 labels from a fixed random projection of ground-truth w.

    Stands in for attribute classifiers, which have no toy-scale analog.
    """
    x = _as_array(latents)
    rng = np.random.default_rng(seed)
    axis = rng.standard_normal(x.shape[1])
    axis /= np.linalg.norm(axis)
    proj = x @ axis
    return np.where(proj > np.median(proj), 1, -1)


def apply_latent_edit(w_plus: Tensor, direction: Direction, alpha: float) -> Tensor:
    """Shift every style row by alpha sigma units along the direction."""
    vec = direction.vector.to(w_plus.dtype)
    if w_plus.shape[-1] != vec.shape[0]:
        raise ShapeError(f"direction dim {vec.shape[0]} != latent dim {w_plus.shape[-1]}")
    return w_plus + alpha * direction.sigma * vec


def feature_edit(f: FeatureMap, generator, w_plus: Tensor, edited_w_plus: Tensor) -> FeatureMap:
    """Transplant the generator's layer-feature difference onto f."""
    if w_plus.shape != edited_w_plus.shape:
        raise ShapeError("original and edited w+ shapes differ")
    base = generator.layer_feature(w_plus, f.layer_index).values
    edited = generator.layer_feature(edited_w_plus, f.layer_index).values
    if f.values.shape != base.shape:
        raise ShapeError(f"feature shape {tuple(f.values.shape)} != layer shape {tuple(base.shape)}")
    return FeatureMap(f.values + (edited - base), f.layer_index)


def edit_image(result, generator, store: "DirectionStore", request: EditRequest) -> Tensor:
    """Apply a named edit to an inversion result and synthesize the image."""
    direction = store[request.direction]
    edited_w_plus = apply_latent_edit(result.w_plus, direction, request.alpha)
    if request.mode == "latent_only":
        img, _ = generator.synthesize(edited_w_plus)
        return img
    f_hat = feature_edit(result.f, generator, result.w_plus, edited_w_plus)
    return generator.synthesize_from_feature(f_hat, edited_w_plus)


class DirectionStore:
    """Named direction collection with JSON + float32 blob persistence."""

    def __init__(self, directions: Iterable[Direction] = ()):
        self._directions: dict[str, Direction] = {}
        for d in directions:
            self.add(d)

    def add(self, direction: Direction) -> None:
        self._directions[direction.name] = direction

    def __getitem__(self, name: str) -> Direction:
        return self._directions[name]

    def __contains__(self, name: str) -> bool:
        return name in self._directions

    def __len__(self) -> int:
        return len(self._directions)

    def names(self) -> list[str]:
        return list(self._directions)

    def values(self) -> list[Direction]:
        return list(self._directions.values())

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        (path / "vectors").mkdir(parents=True, exist_ok=True)
        entries = []
        for i, d in enumerate(self._directions.values()):
            blob = f"vectors/{i:04d}.bin"
            d.vector.numpy().astype("<f4").tofile(path / blob)
            entries.append(
                {
                    "name": d.name,
                    "space": d.space,
                    "method": d.method,
                    "sigma": d.sigma,
                    "metadata": d.metadata,
                    "vector_file": blob,
                    "dim": int(d.vector.shape[0]),
                }
            )
        with open(path / "directions.json", "w") as fh:
            json.dump(entries, fh, indent=2)
        return path

    @classmethod
    def load(cls, path: str | Path) -> "DirectionStore":
        path = Path(path)
        with open(path / "directions.json") as fh:
            entries = json.load(fh)
        store = cls()
        for e in entries:
            vec = np.fromfile(path / e["vector_file"], dtype="<f4")
            if vec.size != e["dim"]:
                raise ValueError(f"direction blob {e['vector_file']} has wrong size")
            store.add(
                Direction(
                    name=e["name"],
                    vector=torch.from_numpy(vec.copy()),
                    sigma=e["sigma"],
                    method=e["method"],
                    space=e["space"],
                    metadata=e.get("metadata", {}),
                )
            )
        return store
