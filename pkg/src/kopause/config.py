"""Model, training and analysis configuration, loadable from one YAML file.

Example file::

    mel:
      hop_length: 256
    encoder:
      embedding_dim: 256
    train:
      batch_size: 16
      lambda_tpgst: 0.3
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from kopause.audio import MelConfig
from kopause.errors import ConfigError


@dataclass(frozen=True)
class EncoderConfig:
    embedding_dim: int = 256
    bank_widths: int = 16
    bank_channels: int = 128
    projection_channels: int = 256
    projection_width: int = 3
    highway_layers: int = 4
    rnn_units: int = 128  # per direction
    tpae_conv_width: int = 3
    tpae_conv_channels: int = 256
    tpae_rnn_units: int = 128
    tpae_fc_layers: int = 1
    acoustic_dim: int = 256

    @property
    def memory_dim(self) -> int:
        return 2 * self.rnn_units


@dataclass(frozen=True)
class ReferenceConfig:
    conv_channels: tuple[int, ...] = (32, 32, 64, 64, 128, 128)
    rnn_units: int = 128
    n_tokens: int = 10
    n_heads: int = 4
    acoustic_dim: int = 256
    min_frames: int = 64

    def __post_init__(self):
        if len(self.conv_channels) != 6:
            raise ConfigError("reference encoder needs exactly six conv layers")
        if self.acoustic_dim % self.n_heads:
            raise ConfigError("acoustic_dim must be divisible by n_heads")
        if self.n_tokens < 1:
            raise ConfigError("need at least one style token")


@dataclass(frozen=True)
class DecoderConfig:
    prenet_sizes: tuple[int, ...] = (256, 256)
    prenet_dropout: float = 0.5
    attention_rnn_units: int = 1024
    attention_dim: int = 128
    decoder_rnn_units: int = 1024
    reduction_factor: int = 1
    postnet_layers: int = 5
    postnet_channels: int = 512
    postnet_width: int = 5
    max_decoder_steps: int = 1000
    gate_threshold: float = 0.5
    sma_noise: float = 2.0
    sma_bias_init: float = -1.5

    def __post_init__(self):
        if self.reduction_factor < 1:
            raise ConfigError("reduction_factor must be >= 1")
        if not 0.0 < self.gate_threshold < 1.0:
            raise ConfigError("gate_threshold must lie in (0, 1)")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    lambda_tpgst: float = 0.3
    lr_schedule: tuple[tuple[int, float], ...] = ((0, 1e-3), (50000, 5e-4), (100000, 3e-4))
    split_ratio: float = 0.9
    seed: int = 1234
    max_iterations: int = 150000
    checkpoint_interval: int = 1000
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-6
    weight_decay: float = 1e-6
    grad_clip: float = 1.0
    gate_loss: str = "bce"
    gate_pos_weight: float = 5.0

    def __post_init__(self):
        if self.lambda_tpgst < 0:
            raise ConfigError("lambda_tpgst must be >= 0")
        its = [it for it, _ in self.lr_schedule]
        if not its or its[0] != 0 or any(b <= a for a, b in zip(its, its[1:])):
            raise ConfigError("lr_schedule iterations must start at 0 and strictly increase")
        if self.gate_loss not in ("bce", "mse"):
            raise ConfigError("gate_loss must be 'bce' or 'mse'")


@dataclass(frozen=True)
class Config:
    mel: MelConfig = field(default_factory=MelConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    reference: ReferenceConfig = field(default_factory=ReferenceConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def replace(self, **sections) -> "Config":
        return dataclasses.replace(self, **sections)

    @classmethod
    def from_dict(cls, data: dict | None) -> "Config":
        data = data or {}
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        sections = {}
        for f in dataclasses.fields(cls):
            section_cls = type(f.default_factory())
            sections[f.name] = _build(section_cls, data.get(f.name) or {})
        return cls(**sections)

    @classmethod
    def load(cls, path: str | Path) -> "Config":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(yaml.safe_load(fh))

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            yaml.safe_dump(_plain(self.to_dict()), fh, sort_keys=False, allow_unicode=True)


def _build(section_cls, values: dict):
    names = {f.name: f for f in dataclasses.fields(section_cls)}
    unknown = set(values) - set(names)
    if unknown:
        raise ConfigError(f"unknown {section_cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for k, v in values.items():
        default = getattr(section_cls(), k)
        if isinstance(default, tuple):
            v = tuple(tuple(x) if isinstance(x, list) else x for x in v)
        elif isinstance(default, float) and isinstance(v, int):
            v = float(v)
        kwargs[k] = v
    try:
        return section_cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section_cls.__name__}: {exc}") from exc


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj
