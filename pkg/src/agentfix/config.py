"""Operator configuration, loaded from JSON and overridden by CLI flags."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .agents.roles import Ablation
from .errors import AgentFixError
from .llm import ProviderConfig
from .websearch import FixtureBackend, SearchClient, SerpApiBackend

SEARCH_BACKENDS = ("live", "fixture")


class ConfigError(AgentFixError):
    pass


@dataclass
class GlobalConfig:
    providers: dict[str, ProviderConfig] = field(default_factory=dict)
    search_backend: str = "fixture"
    search_fixture: str | None = None
    search_api_key_env: str = "SERPAPI_API_KEY"
    rate_limit_per_minute: float | None = None
    run_dir: str = "runs"
    rules_dir: str | None = None
    ablation: Ablation = Ablation.NONE
    max_iterations: int = 3
    parallelism: int = 4
    timeout: float = 300.0

    def __post_init__(self):
        if self.search_backend not in SEARCH_BACKENDS:
            raise ConfigError(f"search_backend must be one of {', '.join(SEARCH_BACKENDS)}")
        try:
            self.ablation = Ablation(self.ablation)
        except ValueError:
            raise ConfigError(f"unknown ablation {self.ablation!r}") from None
        if self.parallelism < 1 or self.timeout <= 0 or self.max_iterations < 1:
            raise ConfigError("parallelism, timeout and max_iterations must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "GlobalConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        data = dict(data)
        try:
            data["providers"] = {name: ProviderConfig.from_dict(p)
                                 for name, p in data.get("providers", {}).items()}
        except (TypeError, KeyError, ValueError) as exc:
            raise ConfigError(f"bad provider profile: {exc}") from exc
        return cls(**data)

    @classmethod
    def load(cls, path: Path | str | None) -> "GlobalConfig":
        if path is None:
            return cls()
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)

    def override(self, **values: Any) -> "GlobalConfig":
        """Copy with every non-None value applied (CLI flags win over the file)."""
        data = self.to_dict()
        data.update({k: v for k, v in values.items() if v is not None})
        return GlobalConfig.from_dict(data)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["providers"] = {name: p.to_dict() for name, p in self.providers.items()}
        out["ablation"] = self.ablation.value
        return out

    def provider(self, role: str) -> ProviderConfig:
        """Profile for ``role`` (fix, critic, summarizer...), falling back to ``default``."""
        for name in (role, "default"):
            if name in self.providers:
                return self.providers[name]
        raise ConfigError(f"no provider profile for {role!r} (and no 'default')")

    def search_client(self) -> SearchClient:
        if self.search_backend == "live":
            return SearchClient(SerpApiBackend(api_key_env=self.search_api_key_env))
        if self.search_fixture:
            try:
                return SearchClient(FixtureBackend.from_file(self.search_fixture))
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read search fixture {self.search_fixture}: {exc}") from exc
        return SearchClient(FixtureBackend({}))
