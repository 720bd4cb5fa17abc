"""Merged run configuration: file values, then flag overrides, then validation."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import yaml

from . import __version__
from .backend.client import ConfigurationError, EndpointConfig
from .grpo import GrpoConfig
from .rewards import RewardWeights
from .simenv.corpus import CorpusConfig
from .tts import ScheduleSpec, TtsConfig

# Calibrated for the linear toy policy; see README ("Learning rate").
TOY_LEARNING_RATE = 20.0


class ConfigError(ValueError):
    """Lists every offending field at once."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))


@dataclass
class RunConfig:
    seed: int = 0
    output_dir: str = "runs"
    jobs: int = 1
    filter_k: int = 8
    train_size: int = 600
    grpo: GrpoConfig = field(
        default_factory=lambda: GrpoConfig(learning_rate=TOY_LEARNING_RATE, epochs=6, max_steps=200)
    )
    tts: TtsConfig = field(default_factory=TtsConfig)
    rewards: RewardWeights = field(default_factory=RewardWeights)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    endpoint: Optional[EndpointConfig] = None

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        if d["endpoint"] is not None:
            d["endpoint"].pop("api_key", None)  # secrets never leave the process
        return d

    def config_hash(self) -> str:
        """Hash of everything that can change results; execution knobs are left out."""
        d = self.to_dict()
        for k in _EXECUTION_ONLY:
            d.pop(k)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"), default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def provenance(self) -> dict[str, Any]:
        return {"config_hash": self.config_hash(), "seed": self.seed, "code_version": __version__}


_EXECUTION_ONLY = ("jobs", "output_dir")

_SECTIONS = {
    "grpo": GrpoConfig,
    "tts": TtsConfig,
    "rewards": RewardWeights,
    "corpus": CorpusConfig,
    "endpoint": EndpointConfig,
}
_TOP = {"seed": int, "output_dir": str, "jobs": int, "filter_k": int, "train_size": int}


def _coerce(value: Any, target: Any, where: str, problems: list[str]) -> Any:
    """Best-effort conversion of strings / lists to the dataclass field type."""
    t = str(target)
    try:
        if isinstance(value, str) and ("int" in t or "float" in t or "bool" in t or "tuple" in t):
            value = yaml.safe_load(value)
        if "tuple" in t and isinstance(value, list):
            return tuple(value)
        if t in ("int", "<class 'int'>") and not (isinstance(value, int) and not isinstance(value, bool)):
            raise TypeError(f"expected an integer, got {value!r}")
        if t in ("float", "<class 'float'>"):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError(f"expected a number, got {value!r}")
            return float(value)
        if t in ("bool", "<class 'bool'>") and not isinstance(value, bool):
            raise TypeError(f"expected true/false, got {value!r}")
    except (TypeError, yaml.YAMLError) as exc:
        problems.append(f"{where}: {exc}")
    return value


def _build_section(cls, values: dict[str, Any], name: str, problems: list[str], base=None):
    fields = {f.name: f for f in dataclasses.fields(cls) if f.init}
    kwargs = dataclasses.asdict(base) if base is not None else {}
    kwargs = {k: v for k, v in kwargs.items() if k in fields}
    if base is not None:  # asdict() flattens nested dataclasses; restore them
        for k in kwargs:
            if dataclasses.is_dataclass(getattr(base, k)):
                kwargs[k] = getattr(base, k)
    n_before = len(problems)
    for key, value in values.items():
        if key not in fields:
            problems.append(f"{name}.{key}: unknown field")
            continue
        if key == "schedule" and isinstance(value, dict):
            value = _build_section(ScheduleSpec, value, f"{name}.schedule", problems)
        else:
            value = _coerce(value, fields[key].type, f"{name}.{key}", problems)
        kwargs[key] = value
    if len(problems) > n_before:
        return base
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        problems.append(f"{name}: {exc}")
        return base


def _set_path(tree: dict, dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node = tree
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def load_config_file(path: Union[str, Path]) -> dict[str, Any]:
    text = Path(path).read_text(encoding="utf-8")
    data = yaml.safe_load(text) if str(path).endswith((".yaml", ".yml")) else json.loads(text)
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    return data


def resolve_config(
    file_values: Optional[dict[str, Any]] = None,
    overrides: Optional[dict[str, Any]] = None,
    use_env: bool = True,
) -> RunConfig:
    """File values, then dotted-key overrides (flags win), then endpoint env vars."""
    tree: dict[str, Any] = json.loads(json.dumps(file_values or {}, default=list))
    for k, v in (overrides or {}).items():
        if v is not None:
            _set_path(tree, k, v)

    problems: list[str] = []
    cfg = RunConfig()
    for key, value in tree.items():
        if key in _TOP:
            setattr(cfg, key, _coerce(value, _TOP[key].__name__, key, problems))
        elif key in _SECTIONS:
            if not isinstance(value, dict):
                problems.append(f"{key}: expected a mapping")
                continue
            base = getattr(cfg, key)
            if key == "endpoint" and base is None:
                built = _build_section(EndpointConfig, value, key, problems)
            else:
                built = _build_section(_SECTIONS[key], value, key, problems, base)
            setattr(cfg, key, built)
        else:
            problems.append(f"{key}: unknown field")

    if use_env and cfg.endpoint is not None:
        try:
            cfg.endpoint = cfg.endpoint.with_env()
        except ConfigurationError as exc:
            problems.append(f"endpoint: {exc}")
    for key in ("jobs", "filter_k", "train_size"):
        if isinstance(getattr(cfg, key), int) and getattr(cfg, key) < 1:
            problems.append(f"{key}: must be positive")
    if problems:
        raise ConfigError(problems)
    return cfg
