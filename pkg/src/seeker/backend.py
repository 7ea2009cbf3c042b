"""Completion backends with token accounting.

Two implementations behind one interface: a scripted backend replaying
per-role fixture lists (tests, offline runs, replay audits) and a thin
chat-completions HTTP client (production). Token counts for the scripted
backend are ceil(chars / 4), applied to both prompt and response.
"""

from __future__ import annotations

import json
import math
import os
import threading
import time
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_UP
from pathlib import Path
from typing import Optional

from seeker.model import SeekerError

ROLES = ("conductor", "materializer", "extractor", "simulator", "judge")


class BackendError(SeekerError):
    pass


class FixtureExhausted(BackendError):
    pass


class TransportError(BackendError):
    pass


class RateLimited(TransportError):
    pass


class UnknownModel(SeekerError):
    pass


@dataclass(frozen=True)
class CompletionRequest:
    role: str
    prompt: str
    max_output_tokens: int = 2048
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if not self.prompt:
            raise ValueError("prompt must be non-empty")


@dataclass(frozen=True)
class Usage:
    input_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")

    def __add__(self, other: "Usage") -> "Usage":
        return Usage(
            self.input_tokens + other.input_tokens,
            self.output_tokens + other.output_tokens,
        )


class UsageLedger:
    """Accumulates usage per role; additions are atomic."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._by_role: dict[str, Usage] = {}

    def record(self, role: str, usage: Usage) -> None:
        with self._lock:
            self._by_role[role] = self._by_role.get(role, Usage()) + usage

    def total(self) -> Usage:
        with self._lock:
            out = Usage()
            for u in self._by_role.values():
                out = out + u
            return out

    def by_role(self) -> dict[str, Usage]:
        with self._lock:
            return dict(self._by_role)


def approx_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


class ScriptedBackend:
    """Replays per-role ordered response lists.

    Fixtures come either from a directory of <role>.jsonl files (each line
    {"text": ...}) or from an in-memory {role: [texts]} mapping. Calls pop
    the next response for their role; running out raises FixtureExhausted.
    """

    def __init__(self, fixtures: dict[str, list[str]]):
        self._responses = {role: list(texts) for role, texts in fixtures.items()}
        self._cursor = {role: 0 for role in self._responses}
        self._lock = threading.Lock()
        self.calls: list[CompletionRequest] = []

    @classmethod
    def from_dir(cls, path: str | Path) -> "ScriptedBackend":
        fixtures: dict[str, list[str]] = {}
        for role in ROLES:
            f = Path(path) / f"{role}.jsonl"
            if f.exists():
                fixtures[role] = [
                    json.loads(line)["text"]
                    for line in f.read_text().splitlines()
                    if line.strip()
                ]
        return cls(fixtures)

    def complete(self, req: CompletionRequest) -> tuple[str, Usage]:
        with self._lock:
            self.calls.append(req)
            queue = self._responses.get(req.role, [])
            i = self._cursor.get(req.role, 0)
            if i >= len(queue):
                raise FixtureExhausted(
                    f"no fixture response left for role {req.role!r} (call {i + 1})"
                )
            self._cursor[req.role] = i + 1
            text = queue[i]
        return text, Usage(approx_tokens(req.prompt), approx_tokens(text))

    def remaining(self, role: str) -> int:
        with self._lock:
            return len(self._responses.get(role, [])) - self._cursor.get(role, 0)


class RemoteBackend:
    """Chat-completions HTTP client. No provider SDK; base URL, model, and
    API key (env var) are the whole configuration surface."""

    def __init__(
        self,
        base_url: Optional[str] = None,
        model: Optional[str] = None,
        api_key_env: str = "SEEKER_API_KEY",
        max_attempts: int = 3,
    ):
        self.base_url = (base_url or os.environ.get("SEEKER_BASE_URL", "")).rstrip("/")
        self.model = model or os.environ.get("SEEKER_MODEL", "")
        self.api_key = os.environ.get(api_key_env, "")
        self.max_attempts = max_attempts
        if not self.base_url:
            raise ValueError("remote backend needs a base URL")

    def complete(self, req: CompletionRequest) -> tuple[str, Usage]:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "max_tokens": req.max_output_tokens,
            "temperature": req.temperature,
        }
        delay = 1.0
        last: Exception | None = None
        for attempt in range(self.max_attempts):
            try:
                resp = requests.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers=headers,
                    timeout=120,
                )
                if resp.status_code == 429:
                    raise RateLimited(f"rate limited (attempt {attempt + 1})")
                resp.raise_for_status()
                body = resp.json()
                text = body["choices"][0]["message"]["content"]
                usage = body.get("usage", {})
                return text, Usage(
                    usage.get("prompt_tokens", approx_tokens(req.prompt)),
                    usage.get("completion_tokens", approx_tokens(text)),
                )
            except RateLimited as exc:
                last = exc
            except Exception as exc:  # requests errors, malformed bodies
                last = TransportError(str(exc))
            if attempt + 1 < self.max_attempts:
                time.sleep(delay)
                delay *= 2
        raise last if isinstance(last, BackendError) else TransportError(str(last))


# -- pricing --------------------------------------------------------------------


@dataclass(frozen=True)
class ModelPrice:
    input_per_million: float
    output_per_million: float

    def __post_init__(self) -> None:
        if self.input_per_million < 0 or self.output_per_million < 0:
            raise ValueError("prices must be >= 0")


@dataclass
class PriceSheet:
    prices: dict[str, ModelPrice] = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: str | Path) -> "PriceSheet":
        raw = json.loads(Path(path).read_text())
        return cls(
            {
                model: ModelPrice(p["input_per_million"], p["output_per_million"])
                for model, p in raw.items()
            }
        )

    def __contains__(self, model: str) -> bool:
        return model in self.prices


def _round_cents(value: float) -> float:
    return float(Decimal(str(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def cost(usage: Usage, sheet: PriceSheet, model: str) -> tuple[float, float]:
    """Dollar cost (input, output), rounded to cents."""
    if model not in sheet:
        raise UnknownModel(model)
    price = sheet.prices[model]
    in_cost = usage.input_tokens * price.input_per_million / 1_000_000
    out_cost = usage.output_tokens * price.output_per_million / 1_000_000
    return _round_cents(in_cost), _round_cents(out_cost)


def cost_unrounded(usage: Usage, sheet: PriceSheet, model: str) -> tuple[float, float]:
    if model not in sheet:
        raise UnknownModel(model)
    price = sheet.prices[model]
    return (
        usage.input_tokens * price.input_per_million / 1_000_000,
        usage.output_tokens * price.output_per_million / 1_000_000,
    )
