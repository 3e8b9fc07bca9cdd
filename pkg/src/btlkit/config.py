"""Tool configuration: built-in defaults, overridden by a JSON file, overridden by flags."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Union

from .annotator import AnnotatorConfig, ModelEndpointConfig
from .errors import ConfigError, InvariantError
from .reward import ALLOCATIONS


@dataclass(frozen=True)
class ToolConfig:
    tau: float = 0.5
    lambda_max: int = 5
    beta: float = 0.04
    coordinate_tolerance: float = 0.14
    allocation: str = "linear"
    fallback_ranker: bool = True
    workers: int = 1
    endpoint: Optional[ModelEndpointConfig] = None

    def __post_init__(self) -> None:
        if not (isinstance(self.tau, (int, float)) and 0 < self.tau <= 1):
            raise ConfigError(f"tau must lie in (0, 1], got {self.tau!r}")
        if isinstance(self.lambda_max, bool) or not isinstance(self.lambda_max, int) or self.lambda_max < 1:
            raise ConfigError(f"lambda_max must be an integer >= 1, got {self.lambda_max!r}")
        if not (isinstance(self.beta, (int, float)) and math.isfinite(self.beta) and self.beta >= 0):
            raise ConfigError(f"beta must be a finite value >= 0, got {self.beta!r}")
        if not (isinstance(self.coordinate_tolerance, (int, float)) and 0 < self.coordinate_tolerance < 1):
            raise ConfigError(f"coordinate_tolerance must lie in (0, 1), got {self.coordinate_tolerance!r}")
        if self.allocation not in ALLOCATIONS:
            raise ConfigError(f"allocation must be one of {sorted(ALLOCATIONS)}, got {self.allocation!r}")
        if not isinstance(self.fallback_ranker, bool):
            raise ConfigError("fallback_ranker must be a boolean")
        if isinstance(self.workers, bool) or not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError(f"workers must be an integer >= 1, got {self.workers!r}")

    def annotator(self) -> AnnotatorConfig:
        return AnnotatorConfig(
            lambda_=self.lambda_max,
            lambda_max=self.lambda_max,
            endpoint=self.endpoint,
            fallback=self.fallback_ranker,
            workers=self.workers,
        )


_ALIASES = {"lambda": "lambda_max"}
_ENDPOINT_KEYS = {f.name for f in fields(ModelEndpointConfig)}


def _endpoint(data: Any, base: Optional[ModelEndpointConfig]) -> ModelEndpointConfig:
    if not isinstance(data, Mapping):
        raise ConfigError("endpoint must be a JSON object")
    unknown = set(data) - _ENDPOINT_KEYS
    if unknown:
        raise ConfigError(f"unknown endpoint settings {sorted(unknown)}")
    merged = {} if base is None else {f.name: getattr(base, f.name) for f in fields(base)}
    merged.update(data)
    if "base_url" not in merged:
        raise ConfigError("endpoint needs a base_url")
    try:
        return ModelEndpointConfig(**merged)
    except (InvariantError, TypeError) as exc:
        raise ConfigError(f"bad endpoint settings: {exc}") from None


def apply_overrides(cfg: ToolConfig, overrides: Mapping[str, Any]) -> ToolConfig:
    """Return ``cfg`` with every non-None override applied."""
    known = {f.name for f in fields(ToolConfig)}
    changes: dict[str, Any] = {}
    for key, value in overrides.items():
        if value is None:
            continue
        key = _ALIASES.get(key, key)
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        if key == "endpoint":
            value = _endpoint(value, cfg.endpoint)
        changes[key] = value
    try:
        return replace(cfg, **changes)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Mapping[str, Any]] = None) -> ToolConfig:
    cfg = ToolConfig()
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg = apply_overrides(cfg, data)
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg
