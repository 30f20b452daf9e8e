"""Model hyperparameters and their key-value config file.

The config file is INI. ``[gapcast]`` holds :class:`ForecastConfig` fields,
``[columns]`` an optional trip column mapping and ``[calendar]`` an optional
``holidays`` list of ISO dates. Any other section or key is an error.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any

from .errors import ConfigError

OPTIMIZERS = ("sgd", "adam")

# fields that change parameter shapes; a checkpoint must agree on all of them
ARCHITECTURE_FIELDS = ("w", "L", "filter_size", "channels", "embed_dim", "ext_width",
                       "head_widths", "use_external", "use_residual")


@dataclass(frozen=True)
class ForecastConfig:
    w: int = 12
    stride: int = 1
    epsilon: float = 0.5
    L: int = 3
    filter_size: tuple[int, int] = (5, 5)
    channels: int = 16
    embed_dim: int = 8
    ext_width: int = 16
    head_widths: tuple[int, ...] = (64, 1)
    batch_size: int = 32
    epochs: int = 50
    learning_rate: float = 1e-3
    optimizer: str = "sgd"
    use_external: bool = False
    use_residual: bool = True
    rec_on_raw: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "filter_size", tuple(self.filter_size))
        object.__setattr__(self, "head_widths", tuple(self.head_widths))
        checks = [
            ("w", self.w >= 2, "must be >= 2"),
            ("stride", self.stride >= 1, "must be >= 1"),
            ("epsilon", self.epsilon > 0, "must be positive"),
            ("L", self.L >= 1, "must be >= 1"),
            ("filter_size", len(self.filter_size) == 2
             and all(s >= 1 and s % 2 == 1 for s in self.filter_size), "must be two odd sizes"),
            ("channels", self.channels >= 1, "must be >= 1"),
            ("embed_dim", self.embed_dim >= 1, "must be >= 1"),
            ("ext_width", self.ext_width >= 1, "must be >= 1"),
            ("head_widths", len(self.head_widths) >= 1 and self.head_widths[-1] == 1
             and all(h >= 1 for h in self.head_widths), "must be positive and end in 1"),
            ("batch_size", self.batch_size >= 1, "must be >= 1"),
            ("epochs", self.epochs >= 0, "must be >= 0"),
            ("learning_rate", self.learning_rate >= 0, "must be >= 0"),
            ("optimizer", self.optimizer in OPTIMIZERS, f"must be one of {OPTIMIZERS}"),
        ]
        for name, ok, why in checks:
            if not ok:
                raise ConfigError(f"config field {name}={getattr(self, name)!r} {why}")
        if self.filter_size[0] > self.w or self.filter_size[1] > self.w:
            raise ConfigError(f"config field filter_size={self.filter_size} exceeds window w={self.w}")

    def replace(self, **changes) -> "ForecastConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["filter_size"] = list(self.filter_size)
        d["head_widths"] = list(self.head_widths)
        return d

    def architecture(self) -> dict[str, Any]:
        d = self.to_dict()
        return {k: d[k] for k in ARCHITECTURE_FIELDS}

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


# residual depth per dataset as used in the original experiments
PRESETS = {
    "yellow": {"L": 3},
    "porto": {"L": 3},
    "didi": {"L": 2},
}


def preset(name: str, **overrides) -> ForecastConfig:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return ForecastConfig(**{**base, **overrides})


def _parse_value(name: str, text: str, default: Any) -> Any:
    text = text.strip()
    try:
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, tuple):
            return tuple(int(v) for v in text.replace(" ", "").split(",") if v)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"config field {name}: cannot parse {text!r}") from None


@dataclass
class ConfigFile:
    model: ForecastConfig = field(default_factory=ForecastConfig)
    columns: dict[str, str] = field(default_factory=dict)
    holidays: tuple[date, ...] = ()


SECTIONS = ("gapcast", "columns", "calendar")


def parse_config(text: str) -> ConfigFile:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep "L" upper-case
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    unknown = [s for s in parser.sections() if s not in SECTIONS]
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")

    defaults = ForecastConfig()
    values = {}
    if parser.has_section("gapcast"):
        for key, raw in parser.items("gapcast"):
            if key not in ForecastConfig.__dataclass_fields__:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _parse_value(key, raw, getattr(defaults, key))
    model = ForecastConfig(**values)

    columns = dict(parser.items("columns")) if parser.has_section("columns") else {}
    holidays: tuple[date, ...] = ()
    if parser.has_section("calendar"):
        cal = dict(parser.items("calendar"))
        extra = set(cal) - {"holidays"}
        if extra:
            raise ConfigError(f"unknown config key(s) in [calendar]: {', '.join(sorted(extra))}")
        try:
            holidays = tuple(date.fromisoformat(d.strip())
                             for d in cal.get("holidays", "").split(",") if d.strip())
        except ValueError as exc:
            raise ConfigError(f"bad holiday date: {exc}") from exc
    return ConfigFile(model, columns, holidays)


def load_config(path: str | Path) -> ConfigFile:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def dump_config(config: ForecastConfig) -> str:
    lines = ["[gapcast]"]
    for key, value in config.to_dict().items():
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
