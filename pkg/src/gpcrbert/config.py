"""Line-oriented ``key = value`` configuration files.

A model file may start from a named preset (``preset = tiny``) and override
any :class:`ModelConfig` field; a train file sets :class:`TrainConfig` fields.
``#`` starts a comment.  Tuples are comma-separated (``head_dims = 1024, 256``).
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any

from .model import ConfigError, ModelConfig
from .trainer import TrainConfig

PRESETS = {"desk": ModelConfig.desk, "tiny": ModelConfig.tiny, "full": ModelConfig.full}


def parse_lines(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _convert(field: dataclasses.Field, value: str, where: str) -> Any:
    kind = str(field.type)
    try:
        if kind.startswith("tuple"):
            return tuple(float(v) if "float" in kind else int(v) for v in value.split(","))
        if kind == "bool":
            lowered = value.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(f"not a boolean: {value!r}")
            return lowered in ("true", "1", "yes")
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        return value
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {field.name}: {exc}") from None


def _build(cls, values: dict[str, str], base: dict[str, Any], source: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - set(fields))
    if unknown:
        raise ConfigError(f"{source}: unknown key(s) {', '.join(unknown)}; known: {', '.join(fields)}")
    merged = dict(base)
    for key, value in values.items():
        merged[key] = _convert(fields[key], value, source)
    try:
        return cls(**merged)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def model_config_from_text(text: str, source: str = "<model config>") -> ModelConfig:
    values = parse_lines(text, source)
    preset = values.pop("preset", "desk")
    if preset not in PRESETS:
        raise ConfigError(f"{source}: unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
    return _build(ModelConfig, values, PRESETS[preset]().to_dict(), source)


def train_config_from_text(text: str, source: str = "<train config>") -> TrainConfig:
    return _build(TrainConfig, parse_lines(text, source), {}, source)


def load_model_config(path: str | Path | None) -> ModelConfig:
    """``path`` may also be a bare preset name."""
    if path is None:
        return ModelConfig.desk()
    if str(path) in PRESETS and not Path(path).exists():
        return PRESETS[str(path)]()
    return model_config_from_text(Path(path).read_text(), str(path))


def load_train_config(path: str | Path | None) -> TrainConfig:
    if path is None:
        return TrainConfig()
    return train_config_from_text(Path(path).read_text(), str(path))


def dump_config(config) -> str:
    lines = []
    for key, value in config.to_dict().items():
        if isinstance(value, (list, tuple)):
            value = ", ".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
