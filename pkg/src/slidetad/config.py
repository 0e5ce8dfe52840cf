"""Layered pipeline configuration: defaults < config file < command-line overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml

from .bmn import BmnConfig
from .core import TimeBase
from .optim import TrainConfig
from .postproc import NmsConfig
from .synth import SynthConfig
from .windowing import WindowConfig


@dataclass(frozen=True)
class ModelConfig:
    num_samples: int = 32
    base_hidden: int = 16
    hidden: int = 8
    map_hidden: int = 8
    pos_threshold: float = 0.9
    neg_threshold: float = 0.3


@dataclass(frozen=True)
class DetectConfig:
    k_points: int = 10
    max_keep: int = 100
    score_floor: float = 1e-4


@dataclass(frozen=True)
class EvalConfig:
    thresholds: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)


@dataclass(frozen=True)
class PipelineConfig:
    timebase: TimeBase = field(default_factory=TimeBase)
    window: WindowConfig = field(default_factory=WindowConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    nms: NmsConfig = field(default_factory=NmsConfig)
    detect: DetectConfig = field(default_factory=DetectConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def bmn(self, feature_dim: int) -> BmnConfig:
        m = self.model
        return BmnConfig(
            L=self.window.window_len_clips,
            D=self.window.max_duration_clips,
            num_samples=m.num_samples,
            feature_dim=feature_dim,
            base_hidden=m.base_hidden,
            hidden=m.hidden,
            map_hidden=m.map_hidden,
            pos_threshold=m.pos_threshold,
            neg_threshold=m.neg_threshold,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


class ConfigError(ValueError):
    pass


def _coerce(cls, key: str, value):
    typ = {f.name: f.type for f in fields(cls)}.get(key)
    if typ is None:
        raise ConfigError(f"unknown config key {cls.__name__}.{key}")
    if isinstance(value, list):
        value = tuple(value)
    if typ in ("float", float) and isinstance(value, int):
        value = float(value)
    return value


def _merge(cfg: PipelineConfig, section: str, updates: dict) -> PipelineConfig:
    if section not in {f.name for f in fields(PipelineConfig)}:
        raise ConfigError(f"unknown config section {section!r}")
    if not isinstance(updates, dict):
        raise ConfigError(f"config section {section!r} must be a mapping")
    sub = getattr(cfg, section)
    kw = {k: _coerce(type(sub), k, v) for k, v in updates.items()}
    try:
        return replace(cfg, **{section: replace(sub, **kw)})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {section} config: {exc}") from exc


def check_consistency(cfg: PipelineConfig) -> None:
    w = cfg.window
    if w.max_duration_clips > w.window_len_clips:
        raise ConfigError(
            f"max_duration_clips D={w.max_duration_clips} exceeds window_len_clips L={w.window_len_clips}"
        )
    if not w.covers_all_segments:
        raise ConfigError(
            f"max_duration_clips ({w.max_duration_clips}) must not exceed the window overlap "
            f"({w.window_len_clips - w.stride_clips} clips)"
        )


def load_config(path: str | Path | None = None, overrides: list[str] = ()) -> PipelineConfig:
    cfg = PipelineConfig()
    if path is not None:
        path = Path(path)
        try:
            doc = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: cannot parse config: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be a mapping of sections")
        for section, updates in doc.items():
            cfg = _merge(cfg, section, updates)
    # group per section so related fields are validated together, not one at a time
    grouped: dict[str, dict] = {}
    for item in overrides:
        key, sep, raw = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot or not name:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        grouped.setdefault(section.strip(), {})[name.strip()] = yaml.safe_load(raw)
    for section, updates in grouped.items():
        cfg = _merge(cfg, section, updates)
    check_consistency(cfg)
    return cfg
