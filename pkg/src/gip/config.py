"""Training configuration: one flat record of every hyperparameter, plus per-dataset presets."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from importlib import resources
from pathlib import Path
from typing import Iterable

from .clustering import CompressionConfig
from .errors import ConfigError
from .kernel import KernelConfig
from .patterns import MsLossConfig


@dataclass(frozen=True)
class TrainConfig:
    # optimisation
    seed: int = 0
    epochs: int = 500
    batch_size: int = 128
    lr: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 50
    # loss weights
    alpha1: float = 0.1
    alpha2: float = 0.4
    alpha3: float = 0.3
    alpha4: float = 0.1
    beta1: float = 0.5
    beta2: float = 0.3
    # encoder and heads
    gcn_layers: int = 3
    hidden_dim: int = 64
    embed_dim: int = 64
    mlp1_hidden: int = 64
    mlp2_hidden: int = 32
    # compression
    num_blocks: int = 1
    ratio: float = 0.1
    delta1_rel: float = 0.05
    normalize_cluster_features: bool = True
    # kernel
    walk_length: int = 3
    walk_norm: str = "sym"
    kernel_features: str = "mass"
    # patterns
    patterns_per_class: int = 4
    pattern_nodes: int = 0
    pattern_init: str = "random"
    pattern_init_noise: float = 0.1
    gamma1: float = 2.0
    gamma2: float = 50.0
    margin: float = 1.0
    delta2: float = 0.5
    diversity_normalized: bool = True
    # data
    val_ratio: float = 0.1
    test_ratio: float = 0.1
    max_degree: int = 64

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "alpha3", "alpha4", "beta1", "beta2"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.pattern_init not in ("centroid", "random"):
            raise ConfigError(f"pattern_init must be 'centroid' or 'random', got {self.pattern_init!r}")
        if self.walk_norm not in ("none", "sym"):
            raise ConfigError(f"walk_norm must be 'none' or 'sym', got {self.walk_norm!r}")
        if self.kernel_features not in ("none", "unit", "mass"):
            raise ConfigError(f"kernel_features must be 'none', 'unit' or 'mass', got {self.kernel_features!r}")
        if self.patterns_per_class < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("patterns_per_class and batch_size must be >= 1, epochs >= 0")

    @property
    def compression(self) -> CompressionConfig:
        return CompressionConfig(self.num_blocks, self.ratio, self.delta1_rel, self.normalize_cluster_features)

    @property
    def kernel(self) -> KernelConfig:
        return KernelConfig(self.walk_length, adjacency_norm=self.walk_norm, feature_norm=self.kernel_features)

    @property
    def ms_loss(self) -> MsLossConfig:
        return MsLossConfig(self.gamma1, self.gamma2, self.margin)

    @property
    def split_ratios(self) -> tuple[float, float, float]:
        return (1.0 - self.val_ratio - self.test_ratio, self.val_ratio, self.test_ratio)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        return cls().with_values(d)

    def with_values(self, values: dict) -> TrainConfig:
        known = {f.name: f for f in fields(self)}
        updates = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            updates[key] = _coerce(key, known[key].type, raw)
        return replace(self, **updates)

    def with_overrides(self, overrides: Iterable[str]) -> TrainConfig:
        """Apply ``key=value`` strings."""
        values = {}
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not of the form key=value")
            key, value = item.split("=", 1)
            values[key.strip()] = value.strip()
        return self.with_values(values)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> TrainConfig:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: not valid JSON ({e})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a flat JSON object")
        return cls.from_dict(data)


def _coerce(key: str, type_name, raw):
    type_name = type_name if isinstance(type_name, str) else type_name.__name__
    try:
        if type_name == "bool":
            if isinstance(raw, bool):
                return raw
            if str(raw).lower() in ("1", "true", "yes", "on"):
                return True
            if str(raw).lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if type_name == "int":
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError(raw)
            return int(raw)
        if type_name == "float":
            return float(raw)
        return str(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value {raw!r} for {key} ({type_name})") from None


PRESET_NAMES = ("enzymes", "proteins", "dd", "mutag", "collab", "graphcycle", "graphfive")


def preset(name: str) -> TrainConfig:
    """Shipped per-dataset config (batch size, lr, epochs, loss weights)."""
    key = name.lower().replace("&", "").replace("_", "")
    if key not in PRESET_NAMES:
        raise ConfigError(f"no preset for {name!r}; available: {', '.join(PRESET_NAMES)}")
    text = resources.files("gip.configs").joinpath(f"{key}.json").read_text()
    return TrainConfig.from_dict(json.loads(text))
