"""Checkpoint directories: a JSON manifest plus one raw float32 blob per parameter.

Layout of a checkpoint directory::

    manifest.json          # kind, config, seed, format version, parameter table
    params/0000.bin        # little-endian float32, one file per named parameter
    params/0001.bin
    ...

The manifest lists parameter names in serialization order; blob files are
numbered in that same order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import torch

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    kind: str
    config: dict[str, Any]
    seed: int | None
    state: dict[str, np.ndarray]
    extra: dict[str, Any] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION


def save_checkpoint(
    path: str | Path,
    kind: str,
    config: dict[str, Any],
    module: torch.nn.Module,
    seed: int | None = None,
    extra: dict[str, Any] | None = None,
) -> Path:
    """Write ``module``'s state dict under ``path`` in manifest+blob form."""
    path = Path(path)
    (path / "params").mkdir(parents=True, exist_ok=True)
    names = []
    shapes = []
    for i, (name, tensor) in enumerate(module.state_dict().items()):
        arr = tensor.detach().cpu().numpy().astype("<f4")
        arr.tofile(path / "params" / f"{i:04d}.bin")
        names.append(name)
        shapes.append(list(arr.shape))
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "config": config,
        "seed": seed,
        "parameters": [{"name": n, "shape": s} for n, s in zip(names, shapes)],
        "extra": extra or {},
    }
    with open(path / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Read a manifest+blob checkpoint directory."""
    path = Path(path)
    with open(path / "manifest.json") as fh:
        manifest = json.load(fh)
    if manifest["format_version"] != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {manifest['format_version']}")
    state = {}
    for i, entry in enumerate(manifest["parameters"]):
        blob = np.fromfile(path / "params" / f"{i:04d}.bin", dtype="<f4")
        state[entry["name"]] = blob.reshape(entry["shape"])
    return Checkpoint(
        kind=manifest["kind"],
        config=manifest["config"],
        seed=manifest.get("seed"),
        state=state,
        extra=manifest.get("extra", {}),
        format_version=manifest["format_version"],
    )


def load_into_module(ckpt: Checkpoint, module: torch.nn.Module) -> None:
    """Copy a checkpoint's blobs into a freshly constructed module."""
    tensors = {k: torch.from_numpy(v.copy()) for k, v in ckpt.state.items()}
    module.load_state_dict(tensors)
