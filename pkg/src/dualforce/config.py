"""Run configuration: one JSON file with strictly validated sections."""

from __future__ import annotations

import json
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path

from .discriminator import DiscriminatorConfig
from .fre import FreConfig
from .mdp import ValidationError
from .trainer import TrainerConfig


@dataclass
class ScenarioConfig:
    name: str  # required
    gamma: float | None = None
    slip: float | None = None
    num_actions: int | None = None  # random scenarios only


@dataclass
class DatasetConfig:
    episodes: int = 300
    expert_samples: int = 2000


@dataclass
class EvalConfig:
    episodes: int = 30
    horizon: int = 60
    threshold: float = 0.5
    every: int = 50
    start_fraction: float = 0.5  # evaluate embeddings stored after this fraction of training
    heldout_rewards: int = 0  # 0: same counts as the training family


@dataclass
class RunConfig:
    scenario: ScenarioConfig
    datasets: DatasetConfig = field(default_factory=DatasetConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    fre: FreConfig = field(default_factory=FreConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = 0

    def to_json(self) -> dict:
        return asdict(self)


SECTIONS = {
    "scenario": ScenarioConfig,
    "datasets": DatasetConfig,
    "discriminator": DiscriminatorConfig,
    "fre": FreConfig,
    "trainer": TrainerConfig,
    "eval": EvalConfig,
}


def _check_type(path: str, value, annotation) -> None:
    # annotations are strings under postponed evaluation
    text = annotation if isinstance(annotation, str) else getattr(annotation, "__name__", str(annotation))
    if value is None:
        if "None" not in text:
            raise ValidationError(f"{path} must not be null")
        return
    if text.startswith("int") and (isinstance(value, bool) or not isinstance(value, int)):
        raise ValidationError(f"{path} must be an integer")
    if text.startswith("float") and (isinstance(value, bool) or not isinstance(value, (int, float))):
        raise ValidationError(f"{path} must be a number")
    if text.startswith("str") and not isinstance(value, str):
        raise ValidationError(f"{path} must be a string")
    if text.startswith("dict") and not isinstance(value, dict):
        raise ValidationError(f"{path} must be an object")
    if text.startswith("list") and not isinstance(value, list):
        raise ValidationError(f"{path} must be a list")


def _build(cls, doc, prefix: str):
    if not isinstance(doc, dict):
        raise ValidationError(f"{prefix} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(doc) - set(known))
    if unknown:
        raise ValidationError(f"unknown config key {prefix}.{unknown[0]}")
    kwargs = {}
    for name, f in known.items():
        path = f"{prefix}.{name}"
        if name not in doc:
            if f.default is MISSING and f.default_factory is MISSING:
                raise ValidationError(f"missing required config key {path}")
            continue
        _check_type(path, doc[name], f.type)
        value = doc[name]
        if f.type.startswith("float") and isinstance(value, int):
            value = float(value)
        kwargs[name] = value
    return cls(**kwargs)


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ValidationError("config must be a JSON object")
    unknown = sorted(set(doc) - set(SECTIONS) - {"seed"})
    if unknown:
        raise ValidationError(f"unknown config key {unknown[0]}")
    if "scenario" not in doc:
        raise ValidationError("missing required config key scenario")
    parts = {name: _build(cls, doc[name], name) for name, cls in SECTIONS.items() if name in doc}
    seed = doc.get("seed", 0)
    _check_type("seed", seed, "int")
    cfg = RunConfig(seed=seed, **parts)
    fre_counts = cfg.fre.counts
    if not all(isinstance(v, int) and v >= 0 for v in fre_counts.values()):
        raise ValidationError("fre.counts values must be non-negative integers")
    cfg.trainer.validate()
    return cfg


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ValidationError(f"config is not valid JSON: {e}") from None
    return parse_config(doc)
