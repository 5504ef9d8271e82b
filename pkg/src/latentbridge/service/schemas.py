"""Request and response bodies for the editing API (images as base64 PNG)."""

from __future__ import annotations

from pydantic import BaseModel, Field


class InvertRequest(BaseModel):
    image: str = Field(description="base64-encoded PNG")


class ReconstructionMetrics(BaseModel):
    psnr_w: float
    psnr_wplus: float
    psnr_f: float


class ReconstructionImages(BaseModel):
    w: str
    wplus: str
    f: str


class InvertResponse(BaseModel):
    session_id: str
    metrics: ReconstructionMetrics
    images: ReconstructionImages


class DirectionInfo(BaseModel):
    name: str
    method: str
    sigma: float


class EditRequestBody(BaseModel):
    session_id: str
    direction: str
    alpha: float
    mode: str = "latent_and_feature"


class AppliedEdit(BaseModel):
    direction: str
    alpha: float
    mode: str


class EditResponse(BaseModel):
    image: str
    applied: AppliedEdit


class HealthResponse(BaseModel):
    status: str
    checkpoint_version: str


class ErrorResponse(BaseModel):
    detail: str
    error_id: str | None = None
