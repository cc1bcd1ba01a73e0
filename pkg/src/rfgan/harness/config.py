"""Run configuration: YAML on disk, frozen dataclasses in memory."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any

import yaml

from ..archspec import ChannelPlan, parse_arch
from ..nets import LossWeights


@dataclass(frozen=True)
class DataConfig:
    kind: str = "procedural"        # "procedural" or "folder"
    count: int = 2000               # images per domain (procedural)
    seed: int = 0
    sim_dir: str | None = None
    real_dir: str | None = None

    def __post_init__(self):
        if self.kind not in ("procedural", "folder"):
            raise ValueError(f"unknown data kind {self.kind!r}")
        if self.kind == "folder" and not (self.sim_dir and self.real_dir):
            raise ValueError("folder data needs sim_dir and real_dir")


@dataclass(frozen=True)
class EvalConfig:
    count: int = 500
    seed: int = 10_000              # held out: training uses DataConfig.seed
    folder: str | None = None
    direction: str = "sim2real"
    backend: str = "classical"
    threshold: float = 0.5
    eval_size: int = 256
    sigma: float = 1.0
    adapter: str | None = None
    n_samples: int = 8              # translations kept for image grids


@dataclass(frozen=True)
class TrainConfig:
    name: str
    arch_spec: str
    image_size: int = 64
    steps: int = 10_000
    learning_rate: float = 1e-4
    decay_rates: tuple[float, float] = (0.5, 0.999)
    weights: LossWeights = field(default_factory=LossWeights)
    perceptual_enabled: bool = False
    perceptual_adapter: str = "rfgan.adapters:random_features"
    seed: int = 0
    checkpoint_every: int = 1000
    channel_plan: ChannelPlan = field(default_factory=ChannelPlan)
    latent_dims: int = 256
    n_downsample: int | None = None
    n_res: int = 1
    data: DataConfig = field(default_factory=DataConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        parse_arch(self.arch_spec)
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if len(self.decay_rates) != 2 or not all(0 <= b < 1 for b in self.decay_rates):
            raise ValueError("decay_rates must be two values in [0, 1)")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be >= 1")

    @property
    def receptive_field(self) -> int:
        return parse_arch(self.arch_spec).receptive_field

    def to_dict(self) -> dict:
        d = asdict(self)
        d["decay_rates"] = list(self.decay_rates)
        return d

    def training_dict(self) -> dict:
        """Everything that affects the trained weights (eval settings excluded)."""
        d = self.to_dict()
        d.pop("eval")
        d.pop("name")
        return d

    @property
    def config_hash(self) -> str:
        return canonical_hash(self.to_dict())

    @property
    def training_hash(self) -> str:
        return canonical_hash(self.training_dict())

    def with_overrides(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


def canonical_hash(obj: Any) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _build(cls, raw: dict | None):
    raw = dict(raw or {})
    names = {f.name for f in fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**raw)


def config_from_dict(raw: dict) -> TrainConfig:
    raw = dict(raw)
    nested = {"weights": LossWeights, "channel_plan": ChannelPlan, "data": DataConfig, "eval": EvalConfig}
    for key, cls in nested.items():
        if key in raw and not is_dataclass(raw[key]):
            raw[key] = _build(cls, raw[key])
    if "decay_rates" in raw:
        raw["decay_rates"] = tuple(float(b) for b in raw["decay_rates"])
    return _build(TrainConfig, raw)


def load_config(path: str | Path) -> TrainConfig:
    path = Path(path)
    raw = yaml.safe_load(path.read_text()) or {}
    raw.setdefault("name", path.stem)
    return config_from_dict(raw)


def dump_config(config: TrainConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=False))


def load_config_dir(path: str | Path) -> list[TrainConfig]:
    files = sorted(p for p in Path(path).iterdir() if p.suffix in (".yaml", ".yml"))
    if not files:
        raise FileNotFoundError(f"no config files in {path}")
    return [load_config(p) for p in files]
