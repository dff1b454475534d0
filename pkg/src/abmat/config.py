"""Pipeline configuration: one JSON document, strictly validated.

Defaults carry the full-scale constants (192x320 network resolution,
640x640 crop, sampling interval 8); desk-scale runs override them.
Unknown keys are rejected so typos in ablation sweeps fail loudly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .errors import ConfigError


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch: int = 4
    steps_bmn: int = 400
    steps_ren: int = 600
    steps_aen: int = 400
    steps_cotrain: int = 100
    bmn_negatives: int = 7
    bmn_transform_magnitude: int = 4


@dataclass
class SynthConfig:
    n_clips: int = 1
    n_frames: int = 16
    height: int = 48
    width: int = 80


@dataclass
class PathsConfig:
    clips: str = "clips"
    checkpoints: str = "checkpoints"
    outputs: str = "outputs"


@dataclass
class PipelineConfig:
    seed: int = 0
    ren_resolution: tuple = (192, 320)
    bmn_resolution: tuple = (192, 320)
    crop_size: int = 640
    crop_threshold: float = 0.1
    crop_margin: float = 0.1
    interval: int = 8
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def validate(self) -> "PipelineConfig":
        h, w = self.ren_resolution
        if h % 8 or w % 8:
            raise ConfigError("ren_resolution must be divisible by 8")
        if self.crop_size % 16:
            raise ConfigError("crop_size must be divisible by 16")
        if self.interval < 1:
            raise ConfigError("interval must be >= 1")
        if self.crop_threshold < 0 or self.crop_margin < 0:
            raise ConfigError("crop threshold/margin must be >= 0")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ren_resolution"] = list(self.ren_resolution)
        d["bmn_resolution"] = list(self.bmn_resolution)
        return d


def _apply(obj, data: dict, path: str) -> None:
    for key, value in data.items():
        if not hasattr(obj, key):
            raise ConfigError(f"unknown config key: {path}{key}")
        current = getattr(obj, key)
        if isinstance(current, (TrainConfig, SynthConfig, PathsConfig)):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}{key} must be an object")
            _apply(current, value, f"{path}{key}.")
        elif key in ("ren_resolution", "bmn_resolution"):
            if not (isinstance(value, list) and len(value) == 2):
                raise ConfigError(f"{path}{key} must be [height, width]")
            setattr(obj, key, (int(value[0]), int(value[1])))
        else:
            if not isinstance(value, type(current)) and not (
                    isinstance(current, float) and isinstance(value, int)):
                raise ConfigError(f"{path}{key} has wrong type")
            setattr(obj, key, type(current)(value))


def load_config(path: str) -> PipelineConfig:
    try:
        with open(path) as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    cfg = PipelineConfig()
    _apply(cfg, data, "")
    return cfg.validate()
