"""
RunConfig: the single JSON document that drives every command.

Loading is strict: unknown keys anywhere in the tree raise ConfigError with
the dotted path of the offending key. Missing keys take the defaults.
"""
from __future__ import annotations

import json
import typing
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Dict, Iterable

from .errors import ConfigError
from .evaluation import EvalConfig
from .infer import InferConfig
from .pilots import PilotConfig
from .scene import SceneConfig
from .training import TrainConfig


@dataclass
class ArrayConfig:
    n_bs: int = 16
    n_ue: int = 4


@dataclass
class PathsConfig:
    data: str = "runs/dataset.xfd"
    out: str = "runs/desk"


@dataclass
class RunConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    arrays: ArrayConfig = field(default_factory=ArrayConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    infer: InferConfig = field(default_factory=InferConfig)
    pilots: PilotConfig = field(default_factory=PilotConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = 0
    paths: PathsConfig = field(default_factory=PathsConfig)


def _strip_optional(tp):
    if typing.get_origin(tp) is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if len(args) == 1:
            return args[0], True
    return tp, False


def _coerce(value: Any, tp, path: str) -> Any:
    tp, optional = _strip_optional(tp)
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{path} must not be null", field=path)
    if is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{path} must be an object", field=path)
        return _build(tp, value, path)
    origin = typing.get_origin(tp)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path} must be a list", field=path)
        args = typing.get_args(tp)
        item = args[0] if args else Any
        return tuple(_coerce(v, item, f"{path}[{i}]") for i, v in enumerate(value))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path} must be true or false, got {value!r}", field=path)
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path} must be an integer, got {value!r}", field=path)
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path} must be a number, got {value!r}", field=path)
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path} must be a string, got {value!r}", field=path)
        return value
    return value


def _build(cls, data: Dict[str, Any], prefix: str = ""):
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls) if f.init}
    for key in data:
        if key not in known:
            path = f"{prefix}.{key}" if prefix else key
            raise ConfigError(f"unknown config key: {path}", field=path)
    kwargs = {
        key: _coerce(value, hints[key], f"{prefix}.{key}" if prefix else key)
        for key, value in data.items()
    }
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{prefix or 'config'}: {e}", field=prefix or None) from e


def config_from_dict(data: Dict[str, Any]) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return _build(RunConfig, data)


def config_to_dict(cfg: RunConfig) -> Dict[str, Any]:
    """Plain JSON-ready dict (tuples become lists)."""
    return json.loads(json.dumps(asdict(cfg)))


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {p}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{p.name}: invalid JSON ({e.msg} at line {e.lineno})") from e
    return config_from_dict(data)


def save_config(cfg: RunConfig, path: str | Path) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(config_to_dict(cfg), ensure_ascii=False, indent=2), encoding="utf-8")


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(cfg: RunConfig, overrides: Iterable[str]) -> RunConfig:
    """
    Apply "a.b.c=value" assignments (value parsed as JSON, else kept as a
    string). Returns a new config; the input is left untouched.
    """
    data = config_to_dict(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key.path=value, got {item!r}")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for i, part in enumerate(parts[:-1]):
            if not isinstance(node, dict) or part not in node or not isinstance(node[part], dict):
                path = ".".join(parts[: i + 1])
                raise ConfigError(f"unknown config key: {path}", field=path)
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key: {key}", field=key)
        node[parts[-1]] = _parse_value(raw)
    return config_from_dict(data)
