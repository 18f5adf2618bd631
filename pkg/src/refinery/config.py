"""Run configuration, loaded from TOML.

Example::

    [backend]
    base_url = "https://api.openai.com/v1"
    model = "gpt-3.5-turbo-0125"

    [pipeline]
    max_rounds = 6
    max_length = 20

Unknown sections or keys are rejected.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BackendConfig:
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-3.5-turbo-0125"
    api_key_env: str = "REFINERY_API_KEY"
    max_attempts: int = 3
    backoff_base: float = 1.0
    timeout: float = 60.0
    max_in_flight: int = 4
    requests_per_second: float = 0.0
    cache: bool = False
    # Separate judge model for Entail/CoR; empty means reuse ``model``.
    judge_model: str = ""

    def validate(self) -> None:
        _positive(self, "max_attempts", "max_in_flight", "timeout")
        _non_negative(self, "backoff_base", "requests_per_second")
        if not self.base_url:
            raise ConfigError("backend.base_url must be set")
        if not self.model:
            raise ConfigError("backend.model must be set")


@dataclass(frozen=True)
class PipelineConfig:
    max_rounds: int = 6
    max_length: int = 20
    preference_threshold: float = 3.0
    characteristics_budget: int = 1500
    personalities_budget: int = 1000
    pros_cons_limit: int = 5
    summarize_pros_cons: bool = False
    repair_attempts: int = 2
    planner_temperature: float = 0.0
    refiner_temperature: float = 0.0
    reflector_temperature: float = 0.0
    max_output_tokens: int = 512
    seed: int = 0
    n_users: int = 200
    parallelism: int = 1

    def validate(self) -> None:
        _positive(self, "max_rounds", "max_length", "pros_cons_limit", "max_output_tokens",
                  "n_users", "parallelism")
        _non_negative(self, "repair_attempts", "planner_temperature", "refiner_temperature",
                      "reflector_temperature")
        if not 1.0 < self.preference_threshold < 5.0:
            raise ConfigError("pipeline.preference_threshold must lie in (1, 5)")
        for name in ("characteristics_budget", "personalities_budget"):
            if getattr(self, name) < 100:
                raise ConfigError(f"pipeline.{name} must be >= 100")

    @property
    def max_attempts(self) -> int:
        return self.repair_attempts + 1


@dataclass(frozen=True)
class MetricsConfig:
    fallback_feature_k: int = 100
    review_budget: int = 4000

    def validate(self) -> None:
        _positive(self, "fallback_feature_k")
        if self.review_budget < 100:
            raise ConfigError("metrics.review_budget must be >= 100")


@dataclass(frozen=True)
class Config:
    backend: BackendConfig = field(default_factory=BackendConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    def validate(self) -> Config:
        self.backend.validate()
        self.pipeline.validate()
        self.metrics.validate()
        return self

    def with_overrides(self, **pipeline: Any) -> Config:
        changes = {k: v for k, v in pipeline.items() if v is not None}
        if not changes:
            return self
        return dataclasses.replace(self, pipeline=dataclasses.replace(self.pipeline, **changes)).validate()


def _positive(obj, *names: str) -> None:
    for name in names:
        if getattr(obj, name) <= 0:
            raise ConfigError(f"{name} must be positive, got {getattr(obj, name)}")


def _non_negative(obj, *names: str) -> None:
    for name in names:
        if getattr(obj, name) < 0:
            raise ConfigError(f"{name} must be non-negative, got {getattr(obj, name)}")


def _build(cls, section: str, data: Any):
    if not isinstance(data, dict):
        raise ConfigError(f"[{section}] must be a table")
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown key {section}.{key}")
        default = known[key].default
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{section}.{key} must be a boolean")
        elif isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{section}.{key} must be an integer")
        elif isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{section}.{key} must be a number")
            value = float(value)
        elif isinstance(default, str) and not isinstance(value, str):
            raise ConfigError(f"{section}.{key} must be a string")
        kwargs[key] = value
    return cls(**kwargs)


_SECTIONS = {"backend": BackendConfig, "pipeline": PipelineConfig, "metrics": MetricsConfig}


def parse_config(data: dict) -> Config:
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]}")
    parts = {name: _build(cls, name, data.get(name, {})) for name, cls in _SECTIONS.items()}
    return Config(**parts).validate()


def load_config(path: str | Path) -> Config:
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return parse_config(data)
