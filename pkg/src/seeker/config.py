"""Configuration: seeker.toml parsing with CLI-flag precedence.

Sections: [service] (host, port, sessions_dir), [conductor] (budgets, k,
sample rows, grounding), [ir] (web search enable, fixtures dir),
[backend] (scripted fixtures dir or remote base URL/model), [corpus]
(corpus directory). Every field has a default; a missing file means all
defaults.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from seeker.conductor import ConductorConfig


@dataclass
class ServiceSettings:
    host: str = "127.0.0.1"
    port: int = 8400
    sessions_dir: str = "sessions"


@dataclass
class IrSettings:
    web_search_enabled: bool = False
    web_fixtures_dir: str = "web_fixtures"


@dataclass
class BackendSettings:
    kind: str = "scripted"  # scripted | remote
    fixtures_dir: str = "fixtures"
    base_url: str = ""
    model: str = ""
    api_key_env: str = "SEEKER_API_KEY"


@dataclass
class Settings:
    service: ServiceSettings = field(default_factory=ServiceSettings)
    conductor: ConductorConfig = field(default_factory=ConductorConfig)
    ir: IrSettings = field(default_factory=IrSettings)
    backend: BackendSettings = field(default_factory=BackendSettings)
    corpus_dir: str = "corpus"


def load_settings(path: Optional[str | Path] = None) -> Settings:
    settings = Settings()
    if path is None:
        return settings
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    raw = tomllib.loads(path.read_text())

    svc = raw.get("service", {})
    settings.service = ServiceSettings(
        host=svc.get("host", settings.service.host),
        port=svc.get("port", settings.service.port),
        sessions_dir=svc.get("sessions_dir", settings.service.sessions_dir),
    )
    cond = raw.get("conductor", {})
    defaults = ConductorConfig().to_json_dict()
    settings.conductor = ConductorConfig(
        **{**defaults, **{k: v for k, v in cond.items() if k in defaults}}
    )
    ir = raw.get("ir", {})
    settings.ir = IrSettings(
        web_search_enabled=ir.get("web_search_enabled", settings.ir.web_search_enabled),
        web_fixtures_dir=ir.get("web_fixtures_dir", settings.ir.web_fixtures_dir),
    )
    be = raw.get("backend", {})
    settings.backend = BackendSettings(
        kind=be.get("kind", settings.backend.kind),
        fixtures_dir=be.get("fixtures_dir", settings.backend.fixtures_dir),
        base_url=be.get("base_url", settings.backend.base_url),
        model=be.get("model", settings.backend.model),
        api_key_env=be.get("api_key_env", settings.backend.api_key_env),
    )
    settings.corpus_dir = raw.get("corpus", {}).get("dir", settings.corpus_dir)
    return settings
