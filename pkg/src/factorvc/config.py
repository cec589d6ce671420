"""Run configuration files.

A run is described by one INI file with up to four sections, each mapping
onto a config dataclass:

    [features]   -> FeatureConfig
    [model]      -> ModelConfig
    [training]   -> TrainingConfig
    [data]       -> DataConfig (manifest/cache/output paths)

Every key defaults to the dataclass default, so a minimal training config
only needs [data]. Unknown sections or keys are errors rather than silent
typo sinks. Values are coerced by the annotated field type.
"""

from __future__ import annotations

import configparser
import dataclasses
import types
import typing
from dataclasses import dataclass
from pathlib import Path

from .features import FeatureConfig
from .model import ModelConfig
from .trainer import TrainingConfig


@dataclass(frozen=True)
class DataConfig:
    train_manifest: str
    cache_dir: str
    out_dir: str
    val_manifest: str | None = None


@dataclass(frozen=True)
class RunConfig:
    features: FeatureConfig
    model: ModelConfig
    training: TrainingConfig
    data: DataConfig | None = None


_SECTIONS = {
    "features": FeatureConfig,
    "model": ModelConfig,
    "training": TrainingConfig,
    "data": DataConfig,
}


def _coerce(value: str, target_type, where: str):
    origin = typing.get_origin(target_type)
    if origin is typing.Union or origin is types.UnionType:
        args = [a for a in typing.get_args(target_type) if a is not type(None)]
        if value.strip() == "":
            return None
        target_type = args[0]
    if target_type is bool:
        lowered = value.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{where}: cannot read {value!r} as a boolean")
    if target_type is int:
        return int(value)
    if target_type is float:
        return float(value)
    if target_type is str:
        return value
    raise ValueError(f"{where}: unsupported field type {target_type!r}")


def _build_section(cls, parser: configparser.ConfigParser, section: str, path):
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    if parser.has_section(section):
        for key, raw in parser.items(section):
            if key not in fields:
                raise ValueError(f"{path}: unknown key '{key}' in [{section}]")
            kwargs[key] = _coerce(raw, hints[key], f"{path} [{section}] {key}")
    missing = [
        name
        for name, f in fields.items()
        if name not in kwargs
        and f.default is dataclasses.MISSING
        and f.default_factory is dataclasses.MISSING
    ]
    if missing:
        raise ValueError(f"{path}: [{section}] is missing required keys {missing}")
    return cls(**kwargs)


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.read(path)
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ValueError(f"{path}: unknown section [{section}]")
    data = None
    if parser.has_section("data"):
        data = _build_section(DataConfig, parser, "data", path)
    return RunConfig(
        features=_build_section(FeatureConfig, parser, "features", path),
        model=_build_section(ModelConfig, parser, "model", path),
        training=_build_section(TrainingConfig, parser, "training", path),
        data=data,
    )


def save_run_config(path: str | Path, rc: RunConfig) -> None:
    """Write a config that load_run_config reads back to an equal RunConfig."""
    parser = configparser.ConfigParser(interpolation=None)
    for section, obj in (
        ("features", rc.features),
        ("model", rc.model),
        ("training", rc.training),
        ("data", rc.data),
    ):
        if obj is None:
            continue
        parser.add_section(section)
        for f in dataclasses.fields(obj):
            value = getattr(obj, f.name)
            if value is None:
                value = ""
            parser.set(section, f.name, repr(value) if isinstance(value, float) else str(value))
    with open(path, "w") as fh:
        parser.write(fh)
