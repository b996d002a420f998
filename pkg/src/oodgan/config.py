"""Training configuration: nested dataclasses loaded from YAML or JSON."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    path: str = ""
    format: str = "generic_tsv"
    max_len: int = 28
    min_count: int = 1
    embeddings: str = ""


@dataclass
class GeneratorConfig:
    emb_dim: int = 300
    hidden_dim: int = 256
    lr: float = 1e-3
    temperature: float = 1.0
    batch_size: int = 64
    pretrain_epochs: int = 50
    patience: int = 5


@dataclass
class DiscriminatorConfig:
    emb_dim: int = 300
    hidden_dim: int = 256
    num_layers: int = 2
    lr: float = 0.1
    initial_accumulator: float = 0.1
    batch_size: int = 64
    pretrain_epochs: int = 3


@dataclass
class ClassifierConfig:
    emb_dim: int = 300
    num_filters: int = 256
    widths: list = field(default_factory=lambda: [2, 3, 4, 5])
    dense_dim: int = 256
    dropout: float = 0.5
    lr: float = 1e-4
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 5


@dataclass
class AdversarialConfig:
    epochs: int = 30
    batch_size: int = 64
    rollouts: int = 16
    reward_mode: str = "rollout"
    baseline_window: int = 100
    collapse_threshold: float = 0.9
    eval_every: int = 5
    eval_patience: int = 2


@dataclass
class FilterSection:
    metric: str = "jaccard"
    threshold: float = 0.8
    dedupe: bool = True


@dataclass
class GenerationConfig:
    count: int = 0
    max_rounds: int = 20
    round_size: int = 0


@dataclass
class DetectorConfig:
    lam: float = 1.0
    lr: float = 1e-4
    batch_size: int = 64
    max_epochs: int = 50
    patience: int = 5
    valid_fraction: float = 0.1


@dataclass
class TrainConfig:
    seed: int
    output_dir: str = "runs/default"
    data: DataConfig = field(default_factory=DataConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    adversarial: AdversarialConfig = field(default_factory=AdversarialConfig)
    filter: FilterSection = field(default_factory=FilterSection)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)

    def __post_init__(self):
        validate(self)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        """Stable digest of every field except the output location."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def __hash__(self) -> int:
        return int(self.hash(), 16)

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        if "seed" not in raw:
            raise ConfigError("seed: required field is missing")
        return _build(cls, raw, "")

    @classmethod
    def load(cls, path: str | Path) -> "TrainConfig":
        text = Path(path).read_text(encoding="utf-8")
        raw = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
        return cls.from_dict(raw or {})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False), encoding="utf-8")

    def override(self, assignments: list[str]) -> "TrainConfig":
        """Apply ``section.key=value`` strings (values parsed as YAML scalars)."""
        d = self.to_dict()
        for item in assignments:
            if "=" not in item:
                raise ConfigError(f"override {item!r} must look like key=value")
            key, value = item.split("=", 1)
            parts = key.strip().split(".")
            node = d
            for p in parts[:-1]:
                if not isinstance(node.get(p), dict):
                    raise ConfigError(f"{key}: unknown config field")
                node = node[p]
            if parts[-1] not in node:
                raise ConfigError(f"{key}: unknown config field")
            node[parts[-1]] = yaml.safe_load(value)
        return TrainConfig.from_dict(d)


def _build(cls, raw: dict, prefix: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs: dict[str, Any] = {}
    for key, value in raw.items():
        name = f"{prefix}{key}"
        if key not in fields:
            raise ConfigError(f"{name}: unknown config field")
        ftype = fields[key].type
        sub = _SECTIONS.get(key) if cls is TrainConfig else None
        if sub is not None:
            if not isinstance(value, dict):
                raise ConfigError(f"{name}: expected a mapping")
            kwargs[key] = _build(sub, value, name + ".")
        else:
            kwargs[key] = _coerce(value, ftype, name)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _coerce(value, ftype, name):
    t = ftype if isinstance(ftype, str) else getattr(ftype, "__name__", str(ftype))
    if t == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true/false, got {value!r}")
    elif t == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
    elif t == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        value = float(value)
    elif t == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{name}: expected a string, got {value!r}")
    elif t == "list":
        if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{name}: expected a list of integers, got {value!r}")
    return value


_SECTIONS = {
    "data": DataConfig,
    "generator": GeneratorConfig,
    "discriminator": DiscriminatorConfig,
    "classifier": ClassifierConfig,
    "adversarial": AdversarialConfig,
    "filter": FilterSection,
    "generation": GenerationConfig,
    "detector": DetectorConfig,
}


def validate(cfg: TrainConfig) -> None:
    """Raise ConfigError naming the first offending field."""
    positive = {
        "data.max_len": cfg.data.max_len,
        "data.min_count": cfg.data.min_count,
        "generator.emb_dim": cfg.generator.emb_dim,
        "generator.hidden_dim": cfg.generator.hidden_dim,
        "generator.batch_size": cfg.generator.batch_size,
        "generator.pretrain_epochs": cfg.generator.pretrain_epochs,
        "generator.patience": cfg.generator.patience,
        "discriminator.emb_dim": cfg.discriminator.emb_dim,
        "discriminator.hidden_dim": cfg.discriminator.hidden_dim,
        "discriminator.num_layers": cfg.discriminator.num_layers,
        "discriminator.batch_size": cfg.discriminator.batch_size,
        "discriminator.pretrain_epochs": cfg.discriminator.pretrain_epochs,
        "classifier.emb_dim": cfg.classifier.emb_dim,
        "classifier.num_filters": cfg.classifier.num_filters,
        "classifier.dense_dim": cfg.classifier.dense_dim,
        "classifier.batch_size": cfg.classifier.batch_size,
        "classifier.max_epochs": cfg.classifier.max_epochs,
        "classifier.patience": cfg.classifier.patience,
        "adversarial.epochs": cfg.adversarial.epochs,
        "adversarial.batch_size": cfg.adversarial.batch_size,
        "adversarial.rollouts": cfg.adversarial.rollouts,
        "adversarial.baseline_window": cfg.adversarial.baseline_window,
        "generation.max_rounds": cfg.generation.max_rounds,
        "detector.batch_size": cfg.detector.batch_size,
        "detector.max_epochs": cfg.detector.max_epochs,
        "detector.patience": cfg.detector.patience,
    }
    for name, v in positive.items():
        if v < 1:
            raise ConfigError(f"{name}: must be >= 1, got {v}")
    if cfg.data.max_len < 3:
        raise ConfigError("data.max_len: must be >= 3")
    if cfg.data.format not in ("rostd_tsv", "osq_json", "generic_tsv"):
        raise ConfigError(f"data.format: unknown format {cfg.data.format!r}")
    if not cfg.classifier.widths or min(cfg.classifier.widths) < 1:
        raise ConfigError("classifier.widths: must be a non-empty list of positive widths")
    if not 0.0 <= cfg.classifier.dropout < 1.0:
        raise ConfigError("classifier.dropout: must lie in [0, 1)")
    if cfg.generator.temperature < 0:
        raise ConfigError("generator.temperature: must be >= 0")
    if cfg.adversarial.reward_mode not in ("rollout", "terminal_only"):
        raise ConfigError(f"adversarial.reward_mode: expected 'rollout' or 'terminal_only', got {cfg.adversarial.reward_mode!r}")
    if not 0.0 < cfg.adversarial.collapse_threshold <= 1.0:
        raise ConfigError("adversarial.collapse_threshold: must lie in (0, 1]")
    if cfg.adversarial.eval_every < 0:
        raise ConfigError("adversarial.eval_every: must be >= 0")
    if cfg.filter.metric not in ("jaccard", "edit"):
        raise ConfigError(f"filter.metric: unknown metric {cfg.filter.metric!r}")
    if not 0.0 <= cfg.filter.threshold <= 1.0:
        raise ConfigError("filter.threshold: must lie in [0, 1]")
    if cfg.generation.count < 0:
        raise ConfigError("generation.count: must be >= 0 (0 = match the IND training size)")
    if cfg.generation.round_size < 0:
        raise ConfigError("generation.round_size: must be >= 0 (0 = same as count)")
    if cfg.detector.lam < 0:
        raise ConfigError("detector.lam: must be >= 0")
    if not 0.0 <= cfg.detector.valid_fraction < 1.0:
        raise ConfigError("detector.valid_fraction: must lie in [0, 1)")
    if cfg.discriminator.initial_accumulator < 0:
        raise ConfigError("discriminator.initial_accumulator: must be >= 0")
    for name in ("generator.lr", "discriminator.lr", "classifier.lr", "detector.lr"):
        sec, key = name.split(".")
        if getattr(getattr(cfg, sec), key) <= 0:
            raise ConfigError(f"{name}: must be > 0")
