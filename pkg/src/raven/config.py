"""Pipeline configuration: a single JSON document with environment-variable
indirection for secrets (API keys are never stored in files)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .gateway import Gateway, HttpProvider, RetryPolicy, StubProvider


@dataclass
class PipelineConfig:
    provider_kind: str = "stub"  # "stub" | "http"
    fixture_path: Optional[str] = None
    base_url: Optional[str] = None
    api_key_env: str = "RAVEN_API_KEY"
    vlm_model: str = "vlm"
    llm_model: str = "llm"
    embed_model: str = "embedder"
    requests_per_minute: Optional[float] = None
    max_in_flight: int = 8
    max_attempts: int = 3
    backoff_base_ms: int = 500
    backoff_factor: float = 2.0
    k_top_categories: int = 50
    min_similarity: float = 0.30
    max_examples_inline: int = 3
    max_failure_rate: float = 0.2
    categorize_template: Optional[str] = None  # path; None = packaged default
    extract_template: Optional[str] = None
    generic_entities: bool = True
    text_sidechannel: bool = True
    fixed_time: Optional[str] = None  # RFC 3339; pins created_at for reruns

    def validate(self):
        if self.provider_kind not in ("stub", "http"):
            raise ConfigError(f"provider_kind must be stub or http, got {self.provider_kind!r}")
        if self.provider_kind == "stub" and not self.fixture_path:
            raise ConfigError("stub provider requires fixture_path")
        if self.provider_kind == "http" and not self.base_url:
            raise ConfigError("http provider requires base_url")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")
        if self.k_top_categories < 1:
            raise ConfigError("k_top_categories must be >= 1")
        if not -1.0 <= self.min_similarity <= 1.0:
            raise ConfigError("min_similarity must be in [-1, 1]")
        if self.max_examples_inline < 1:
            raise ConfigError("max_examples_inline must be >= 1")
        if not 0.0 <= self.max_failure_rate <= 1.0:
            raise ConfigError("max_failure_rate must be in [0, 1]")

    @property
    def retry_policy(self) -> RetryPolicy:
        return RetryPolicy(self.max_attempts, self.backoff_base_ms, self.backoff_factor)

    def clock(self):
        if self.fixed_time:
            fixed = self.fixed_time
            return lambda: fixed
        return None


_FIELDS = set(PipelineConfig.__dataclass_fields__)


def load_config(path) -> PipelineConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load config {path}: {exc}") from exc
    unknown = set(obj) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    config = PipelineConfig(**obj)
    config.validate()
    return config


def build_gateway(config: PipelineConfig, base_dir=None) -> Gateway:
    if config.provider_kind == "stub":
        fixture = Path(config.fixture_path)
        if base_dir and not fixture.is_absolute():
            fixture = Path(base_dir) / fixture
        provider = StubProvider(fixture)
    else:
        provider = HttpProvider(
            base_url=config.base_url,
            api_key_env=config.api_key_env,
            model_ids={
                "vlm": config.vlm_model,
                "llm": config.llm_model,
                "embedder": config.embed_model,
            },
        )
    return Gateway(
        provider,
        policy=config.retry_policy,
        requests_per_minute=config.requests_per_minute,
    )
