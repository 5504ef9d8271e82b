"""Run configuration: one JSON file mirroring each module's config section.

Unknown keys are rejected so typos fail loudly; any populated ``*_path``
field must point at an existing file when the config is loaded from disk.
"""

from __future__ import annotations

import inspect
import json
from dataclasses import dataclass, field
from pathlib import Path

from .alignment import AlignConfig
from .encoder import EncoderConfig
from .errors import ConfigError
from .generator import GeneratorConfig
from .training import TrainConfig


@dataclass
class DataConfig:
    pairs_count: int = 20000
    pairs_seed: int = 0
    pairs_path: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class EditingConfig:
    pca_components: int = 4
    svm_attributes: int = 2
    sample_count: int = 2000
    seed: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _checked(payload, cls, section: str) -> dict:
    """Reject keys the section's constructor does not know."""
    if not isinstance(payload, dict):
        raise ConfigError(f"section {section!r} must be an object")
    allowed = set(inspect.signature(cls).parameters)
    unknown = set(payload) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in section {section!r}: {sorted(unknown)}")
    return dict(payload)


@dataclass
class RunConfig:
    seed: int = 0
    run_dir: str = "runs/default"
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    align: AlignConfig = field(default_factory=AlignConfig)
    encoder_overrides: dict = field(default_factory=dict)
    training: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    editing: EditingConfig = field(default_factory=EditingConfig)

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig.for_generator(self.generator, **self.encoder_overrides)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "run_dir": self.run_dir,
            "generator": self.generator.to_dict(),
            "align": self.align.to_dict(),
            "encoder_overrides": dict(self.encoder_overrides),
            "training": self.training.to_dict(),
            "data": self.data.to_dict(),
            "editing": self.editing.to_dict(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RunConfig":
        known = {
            "seed",
            "run_dir",
            "generator",
            "align",
            "encoder_overrides",
            "training",
            "data",
            "editing",
        }
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
        return cls(
            seed=payload.get("seed", 0),
            run_dir=payload.get("run_dir", "runs/default"),
            generator=GeneratorConfig.from_dict(
                _checked(payload.get("generator", {}), GeneratorConfig, "generator")
            ),
            align=AlignConfig.from_dict(_checked(payload.get("align", {}), AlignConfig, "align")),
            encoder_overrides=_checked(
                payload.get("encoder_overrides", {}), EncoderConfig, "encoder_overrides"
            ),
            training=TrainConfig.from_dict(
                _checked(payload.get("training", {}), TrainConfig, "training")
            ),
            data=DataConfig(**_checked(payload.get("data", {}), DataConfig, "data")),
            editing=EditingConfig(**_checked(payload.get("editing", {}), EditingConfig, "editing")),
        )

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            payload = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        cfg = cls.from_dict(payload)
        if cfg.data.pairs_path and not Path(cfg.data.pairs_path).exists():
            raise ConfigError(f"data.pairs_path does not exist: {cfg.data.pairs_path}")
        return cfg
