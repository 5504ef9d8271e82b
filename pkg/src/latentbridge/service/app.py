"""FastAPI editing service wrapping the core package.

Checkpoints are loaded once at startup; models are frozen and shared
read-only across requests. Endpoints are sync handlers so the framework runs
them in its worker threadpool, and per-session locks serialize edits on the
same session while distinct sessions proceed concurrently.
"""

from __future__ import annotations

import base64
import binascii
import logging
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import torch
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from ..alignment import AlignConfig, AlignModel
from ..checkpoint import load_checkpoint, load_into_module
from ..data import png_bytes_to_tensor, tensor_to_png_bytes
from ..editing import DirectionStore, EditRequest, apply_latent_edit, feature_edit
from ..encoder import EncoderConfig, InversionEncoder
from ..generator import GeneratorConfig, StyleGenerator
from ..metrics import psnr
from ..training import parameter_checksum
from .schemas import (
    AppliedEdit,
    DirectionInfo,
    EditRequestBody,
    EditResponse,
    HealthResponse,
    InvertRequest,
    InvertResponse,
    ReconstructionImages,
    ReconstructionMetrics,
)
from .sessions import SessionStore

log = logging.getLogger(__name__)

MODES = ("latent_only", "latent_and_feature")


@dataclass
class ServiceBundle:
    generator: StyleGenerator
    encoder: InversionEncoder
    directions: DirectionStore
    align: Optional[AlignModel] = None
    version: str = ""

    def __post_init__(self):
        if not self.version:
            self.version = parameter_checksum(self.encoder)[:12]
        self.generator.eval()
        self.encoder.eval()
        self.encoder.requires_grad_(False)


def load_bundle(run_dir: str | Path) -> ServiceBundle:
    """Load generator/encoder checkpoints and the direction store from a run."""
    run_dir = Path(run_dir)
    gen_ck = load_checkpoint(run_dir / "generator")
    generator = StyleGenerator(GeneratorConfig.from_dict(gen_ck.config))
    load_into_module(gen_ck, generator)
    enc_ck = load_checkpoint(run_dir / "encoder")
    encoder = InversionEncoder(EncoderConfig.from_dict(enc_ck.config))
    load_into_module(enc_ck, encoder)
    directions_dir = run_dir / "directions"
    directions = DirectionStore.load(directions_dir) if directions_dir.exists() else DirectionStore()
    return ServiceBundle(generator=generator, encoder=encoder, directions=directions)


def _b64_png_to_tensor(b64: str, resolution: int):
    try:
        raw = base64.b64decode(b64, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise HTTPException(status_code=400, detail=f"invalid base64 image: {exc}") from exc
    try:
        return png_bytes_to_tensor(raw, resolution)
    except Exception as exc:
        raise HTTPException(status_code=400, detail=f"undecodable PNG: {exc}") from exc


def _tensor_to_b64(img) -> str:
    return base64.b64encode(tensor_to_png_bytes(img)).decode("ascii")


def create_app(
    bundle: ServiceBundle,
    session_capacity: int = 256,
    frontend_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="latentbridge editing service")
    store = SessionStore(capacity=session_capacity)
    app.state.bundle = bundle
    app.state.sessions = store
    generator = bundle.generator
    encoder = bundle.encoder
    resolution = generator.config.image_resolution

    @app.exception_handler(RequestValidationError)
    def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": str(exc.errors())})

    @app.exception_handler(Exception)
    def internal_error(request: Request, exc: Exception):
        error_id = uuid.uuid4().hex[:8]
        log.exception("internal error %s", error_id)
        return JSONResponse(
            status_code=500, content={"detail": "internal error", "error_id": error_id}
        )

    @app.get("/api/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", checkpoint_version=bundle.version)

    @app.get("/api/directions", response_model=list[DirectionInfo])
    def directions():
        return [
            DirectionInfo(name=d.name, method=d.method, sigma=d.sigma)
            for d in bundle.directions.values()
        ]

    @app.post("/api/invert", response_model=InvertResponse)
    def invert(body: InvertRequest):
        image = _b64_png_to_tensor(body.image, resolution)
        with torch.no_grad():
            result = encoder.invert(image)
            img_w, img_wp, img_f = generator.synthesize_ladder(result.w, result.w_plus, result.f)
        pngs = {"w": _tensor_to_b64(img_w), "wplus": _tensor_to_b64(img_wp), "f": _tensor_to_b64(img_f)}
        session = store.create(
            source=image,
            result=result,
            reconstruction_png={"latent_only": pngs["wplus"], "latent_and_feature": pngs["f"]},
        )
        return InvertResponse(
            session_id=session.session_id,
            metrics=ReconstructionMetrics(
                psnr_w=psnr(image, img_w).item(),
                psnr_wplus=psnr(image, img_wp).item(),
                psnr_f=psnr(image, img_f).item(),
            ),
            images=ReconstructionImages(**pngs),
        )

    @app.post("/api/edit", response_model=EditResponse)
    def edit(body: EditRequestBody):
        session = store.get(body.session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {body.session_id}")
        if body.mode not in MODES:
            raise HTTPException(status_code=400, detail=f"mode must be one of {MODES}")
        if body.direction not in bundle.directions:
            raise HTTPException(status_code=404, detail=f"unknown direction {body.direction!r}")
        applied = AppliedEdit(direction=body.direction, alpha=body.alpha, mode=body.mode)
        with session.lock:
            if body.alpha == 0.0:
                image_b64 = session.reconstruction_png[body.mode]
            else:
                direction = bundle.directions[body.direction]
                result = session.result
                with torch.no_grad():
                    edited_w_plus = apply_latent_edit(result.w_plus, direction, body.alpha)
                    if body.mode == "latent_only":
                        img, _ = generator.synthesize(edited_w_plus)
                    else:
                        f_hat = feature_edit(result.f, generator, result.w_plus, edited_w_plus)
                        img = generator.synthesize_from_feature(f_hat, edited_w_plus)
                image_b64 = _tensor_to_b64(img)
            session.history.append(applied.model_dump())
        return EditResponse(image=image_b64, applied=applied)

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="frontend")

    return app
