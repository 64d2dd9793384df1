"""Run configuration: every stage's settings in one JSON document, plus its fingerprint."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .augment import AugmentConfig
from .data import LabelRuleSet
from .errors import ConfigError
from .forest import ForestConfig
from .gan import GanConfig
from .synth import SynthConfig

_SECTIONS = {
    "gan": GanConfig,
    "augment": AugmentConfig,
    "forest": ForestConfig,
    "synth": SynthConfig,
    "label_rules": LabelRuleSet,
}


@dataclass
class RunConfig:
    gan: GanConfig = field(default_factory=GanConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    label_rules: LabelRuleSet = field(default_factory=LabelRuleSet)
    seed: int = 0
    test_fraction: float = 0.2
    threshold: float = 0.5
    calibrate: bool = False

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold must lie in [0, 1], got {self.threshold}")

    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_seed(self, seed: int) -> "RunConfig":
        """Copy with ``seed`` pushed into every seeded section."""
        d = self.to_dict()
        d["seed"] = seed
        for name in ("gan", "augment", "forest", "synth"):
            d[name]["seed"] = seed
        return RunConfig.from_dict(d)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        kwargs = {}
        try:
            for name, value in d.items():
                if name in _SECTIONS:
                    if not isinstance(value, dict):
                        raise ConfigError(f"section {name!r} must be an object")
                    kwargs[name] = _SECTIONS[name](**value)
                else:
                    kwargs[name] = value
            return cls(**kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such config file: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return RunConfig.from_dict(raw)


def save_config(config: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=1, sort_keys=True) + "\n")
