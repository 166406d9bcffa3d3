"""Run configuration: one JSON document, every field defaulted, unknown keys rejected."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import List, Optional

from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    emb_dim: int = 32
    hid_dim: int = 32
    mlp_dim: Optional[int] = None  # defaults to hid_dim
    keep_prob: float = 0.75
    vocab_size: Optional[int] = None  # inferred from vocab file, oracle or data


@dataclass
class DataConfig:
    train: Optional[str] = None
    test: Optional[str] = None
    vocab: Optional[str] = None
    generator: Optional[str] = None
    reward: Optional[str] = None
    oracle: Optional[str] = None
    samples: Optional[str] = None


@dataclass
class OracleConfig:
    n_content: int = 5000
    emb_dim: int = 32
    hid_dim: int = 32
    seq_len: int = 20
    n_train: int = 10000
    n_test: int = 0
    seed: Optional[int] = None  # defaults to the run seed


@dataclass
class MetricsConfig:
    orders: List[int] = field(default_factory=lambda: [2, 3, 4, 5])
    n_hyp: int = 1000
    n_ref: int = 5000
    eps: float = 1e-9
    cumulative: bool = True


@dataclass
class SampleConfig:
    n: int = 1000
    decode: bool = False


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "runs/default"
    log_wall_time: bool = False
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    sample: SampleConfig = field(default_factory=SampleConfig)

    def train_config(self) -> TrainConfig:
        return dataclasses.replace(self.train, seed=self.seed)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["train"].pop("seed")  # the run seed is the only seed
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


_SECTIONS = {"model": ModelConfig, "data": DataConfig, "oracle": OracleConfig,
             "metrics": MetricsConfig, "sample": SampleConfig, "train": TrainConfig}


def _build(cls, values: dict, where: str):
    if not isinstance(values, dict):
        raise ConfigError(f"{where} must be a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    if cls is TrainConfig:
        names.discard("seed")
    unknown = sorted(set(values) - names)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {unknown}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from None


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    top = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(raw) - top)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {unknown}")
    kwargs = {}
    for key, value in raw.items():
        if key in _SECTIONS:
            kwargs[key] = _build(_SECTIONS[key], value, key)
        else:
            kwargs[key] = value
    cfg = RunConfig(**kwargs)
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool) or not (0 <= cfg.seed < 2**64):
        raise ConfigError("seed must be a non-negative 64-bit integer")
    if not 0.0 < cfg.model.keep_prob <= 1.0:
        raise ConfigError("model.keep_prob must lie in (0, 1]")
    return cfg


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return config_from_dict(raw)
