"""Image ingestion and the PNG codec.

Tensors are float32 in [-1, 1]; PNGs are 8-bit RGB. Ingested images are
center-cropped to square then resized to the working resolution.
"""

from __future__ import annotations

import io
import logging
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch import Tensor

log = logging.getLogger(__name__)


def tensor_to_png_bytes(img: Tensor) -> bytes:
    """Encode a (3, H, W) tensor in [-1, 1] as PNG bytes."""
    arr = img.detach().cpu().numpy()
    u8 = np.clip(np.rint((arr + 1.0) * 127.5), 0, 255).astype(np.uint8)
    pil = Image.fromarray(np.moveaxis(u8, 0, 2), mode="RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def png_bytes_to_tensor(data: bytes, resolution: int | None = None) -> Tensor:
    """Decode PNG bytes into a [-1, 1] tensor, optionally crop/resize."""
    pil = Image.open(io.BytesIO(data)).convert("RGB")
    if resolution is not None:
        pil = center_crop_resize(pil, resolution)
    arr = np.asarray(pil, dtype=np.float32) / 255.0 * 2.0 - 1.0
    return torch.from_numpy(np.moveaxis(arr, 2, 0).copy())


def center_crop_resize(pil: Image.Image, resolution: int) -> Image.Image:
    w, h = pil.size
    side = min(w, h)
    left = (w - side) // 2
    top = (h - side) // 2
    pil = pil.crop((left, top, left + side, top + side))
    if side != resolution:
        pil = pil.resize((resolution, resolution), Image.LANCZOS)
    return pil


def save_image(img: Tensor, path: str | Path) -> Path:
    path = Path(path)
    path.write_bytes(tensor_to_png_bytes(img))
    return path


def load_image(path: str | Path, resolution: int | None = None) -> Tensor:
    return png_bytes_to_tensor(Path(path).read_bytes(), resolution)


def ingest_images(folder: str | Path, resolution: int) -> Tensor:
    """Load every readable PNG in a folder as a (N, 3, res, res) batch.

    Unreadable files are skipped with a warning; an empty result is an error.
    """
    folder = Path(folder)
    if not folder.is_dir():
        raise FileNotFoundError(f"not a directory: {folder}")
    tensors = []
    for path in sorted(folder.glob("*.png")):
        try:
            tensors.append(load_image(path, resolution))
        except Exception as exc:
            log.warning("skipping unreadable image %s: %s", path, exc)
    if not tensors:
        raise ValueError(f"no readable PNG images in {folder}")
    return torch.stack(tensors)
