"""Provider-agnostic chat interface with tool calling and usage accounting.

Two providers ship here: an OpenAI-compatible HTTP client (chat-completions
wire format, which OpenAI and OpenRouter both speak) and a scripted mock
that replays canned assistant turns for offline runs.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import httpx

from .errors import AgentFixError, TransportError

logger = logging.getLogger(__name__)


class ProviderRefusal(AgentFixError):
    """Non-retryable provider response (4xx other than 429, content refusal)."""


class MalformedToolCall(AgentFixError):
    pass


class ScriptExhausted(AgentFixError):
    pass


@dataclass(frozen=True)
class ToolCallRequest:
    call_id: str
    tool_name: str
    arguments: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"call_id": self.call_id, "tool_name": self.tool_name, "arguments": self.arguments}

    @classmethod
    def from_dict(cls, data: dict) -> "ToolCallRequest":
        return cls(data["call_id"], data["tool_name"], dict(data.get("arguments") or {}))


@dataclass(frozen=True)
class ChatTurn:
    role: str
    content: str = ""
    tool_calls: tuple[ToolCallRequest, ...] = ()
    tool_call_id: str | None = None

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant", "tool"):
            raise ValueError(f"bad role {self.role!r}")
        if self.role == "tool" and not self.tool_call_id:
            raise ValueError("tool turns need a tool_call_id")
        if self.tool_calls and self.role != "assistant":
            raise ValueError("only assistant turns carry tool calls")

    def to_dict(self) -> dict:
        data: dict[str, Any] = {"role": self.role, "content": self.content}
        if self.tool_calls:
            data["tool_calls"] = [c.to_dict() for c in self.tool_calls]
        if self.tool_call_id is not None:
            data["tool_call_id"] = self.tool_call_id
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ChatTurn":
        return cls(
            role=data["role"],
            content=data.get("content") or "",
            tool_calls=tuple(ToolCallRequest.from_dict(c) for c in data.get("tool_calls") or ()),
            tool_call_id=data.get("tool_call_id"),
        )


@dataclass(frozen=True)
class ToolSchema:
    name: str
    description: str
    parameters: dict[str, Any] = field(default_factory=lambda: {"type": "object", "properties": {}})

    @property
    def required(self) -> list[str]:
        return list(self.parameters.get("required", []))

    def to_wire(self) -> dict:
        return {
            "type": "function",
            "function": {"name": self.name, "description": self.description, "parameters": self.parameters},
        }


@dataclass(frozen=True)
class UsageRecord:
    input_tokens: int = 0
    output_tokens: int = 0
    wall_time: float = 0.0
    cost: float = 0.0

    def __post_init__(self):
        if min(self.input_tokens, self.output_tokens) < 0 or self.wall_time < 0 or self.cost < 0:
            raise ValueError("usage fields must be non-negative")

    @classmethod
    def priced(cls, input_tokens: int, output_tokens: int, wall_time: float,
               price_in: float, price_out: float) -> "UsageRecord":
        return cls(input_tokens, output_tokens, wall_time,
                   input_tokens * price_in + output_tokens * price_out)

    def to_dict(self) -> dict:
        return {
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "wall_time": self.wall_time,
            "cost": self.cost,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "UsageRecord":
        return cls(int(data.get("input_tokens", 0)), int(data.get("output_tokens", 0)),
                   float(data.get("wall_time", 0.0)), float(data.get("cost", 0.0)))


@dataclass(frozen=True)
class SessionUsage:
    total: UsageRecord
    count: int
    mean: UsageRecord | None  # None when there are no records

    def to_dict(self) -> dict:
        return {
            "total": self.total.to_dict(),
            "count": self.count,
            "mean": self.mean.to_dict() if self.mean else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SessionUsage":
        mean = data.get("mean")
        return cls(UsageRecord.from_dict(data["total"]), int(data["count"]),
                   UsageRecord.from_dict(mean) if mean else None)


def aggregate_usage(records: Iterable[UsageRecord]) -> SessionUsage:
    records = list(records)
    tin = sum(r.input_tokens for r in records)
    tout = sum(r.output_tokens for r in records)
    wall = math.fsum(r.wall_time for r in records)
    cost = math.fsum(r.cost for r in records)
    total = UsageRecord(tin, tout, wall, cost)
    n = len(records)
    if n == 0:
        return SessionUsage(total, 0, None)
    # token means are floored to stay integral
    mean = UsageRecord(tin // n, tout // n, wall / n, cost / n)
    return SessionUsage(total, n, mean)


# USD per 1M tokens; overridable from config. Values are list prices at time of writing.
DEFAULT_PRICING: dict[str, tuple[float, float]] = {
    "gpt-5.2": (1.75, 14.00),
    "gpt-5-mini": (0.25, 2.00),
    "google/gemini-3-pro-preview": (2.00, 12.00),
    "anthropic/claude-sonnet-4": (3.00, 15.00),
}


def resolve_prices(model: str, table: dict[str, Sequence[float]] | None = None) -> tuple[float, float]:
    """Per-token (input, output) prices; unknown models price at zero with a warning."""
    table = DEFAULT_PRICING if table is None else table
    if model not in table:
        logger.warning("no pricing for model %r; costs will be reported as 0", model)
        return 0.0, 0.0
    per_m_in, per_m_out = table[model]
    return per_m_in / 1_000_000, per_m_out / 1_000_000


@dataclass(frozen=True)
class ProviderConfig:
    provider_id: str
    model_name: str
    endpoint: str = ""
    api_key_env: str = ""
    price_in: float = 0.0
    price_out: float = 0.0
    request_timeout: float = 120.0
    max_retries: int = 3
    extra_body: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.price_in < 0 or self.price_out < 0:
            raise ValueError("prices must be >= 0")
        if self.request_timeout <= 0:
            raise ValueError("request_timeout must be > 0")

    @classmethod
    def from_dict(cls, data: dict, pricing: dict | None = None) -> "ProviderConfig":
        data = dict(data)
        if "price_in" not in data and "price_out" not in data:
            data["price_in"], data["price_out"] = resolve_prices(data["model_name"], pricing)
        return cls(**data)

    def to_dict(self) -> dict:
        # credentials are referenced by env-var name only, so this is safe to persist
        return {
            "provider_id": self.provider_id,
            "model_name": self.model_name,
            "endpoint": self.endpoint,
            "api_key_env": self.api_key_env,
            "price_in": self.price_in,
            "price_out": self.price_out,
            "request_timeout": self.request_timeout,
            "max_retries": self.max_retries,
            "extra_body": self.extra_body,
        }


class RateLimiter:
    """Process-wide requests-per-minute gate, safe across threads."""

    def __init__(self, per_minute: float | None = None, clock=time.monotonic, sleep=time.sleep):
        self.per_minute = per_minute
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next = 0.0

    def acquire(self) -> None:
        if not self.per_minute:
            return
        interval = 60.0 / self.per_minute
        with self._lock:
            now = self._clock()
            slot = max(now, self._next)
            self._next = slot + interval
        if slot > now:
            self._sleep(slot - now)


GLOBAL_RATE_LIMITER = RateLimiter()


class ChatProvider:
    config: ProviderConfig

    def complete(self, history: Sequence[ChatTurn], tools: Sequence[ToolSchema]) -> tuple[ChatTurn, int, int]:
        """Return (assistant turn, input tokens, output tokens)."""
        raise NotImplementedError

    def simulated_latency(self) -> float | None:
        return None


def chat(provider: ChatProvider, history: Sequence[ChatTurn],
         tools: Sequence[ToolSchema] = ()) -> tuple[ChatTurn, UsageRecord]:
    if not history:
        raise ValueError("history must be non-empty")
    names = [t.name for t in tools]
    if len(names) != len(set(names)):
        raise ValueError(f"duplicate tool names: {names}")
    started = time.perf_counter()
    turn, tin, tout = provider.complete(history, tools)
    elapsed = time.perf_counter() - started
    scripted = provider.simulated_latency()
    wall = elapsed if scripted is None else scripted
    cfg = provider.config
    return turn, UsageRecord.priced(tin, tout, wall, cfg.price_in, cfg.price_out)


@dataclass
class ScriptedTurn:
    content: str = ""
    tool_calls: list[dict] = field(default_factory=list)
    input_tokens: int = 0
    output_tokens: int = 0
    wall_time: float = 0.0

    @classmethod
    def coerce(cls, item: "ScriptedTurn | dict | str") -> "ScriptedTurn":
        if isinstance(item, ScriptedTurn):
            return item
        if isinstance(item, str):
            return cls(content=item)
        usage = item.get("usage", {})
        return cls(
            content=item.get("content", ""),
            tool_calls=list(item.get("tool_calls", [])),
            input_tokens=int(usage.get("input_tokens", item.get("input_tokens", 0))),
            output_tokens=int(usage.get("output_tokens", item.get("output_tokens", 0))),
            wall_time=float(usage.get("wall_time", item.get("wall_time", 0.0))),
        )


_MOCK_CONFIG = ProviderConfig(provider_id="mock", model_name="scripted")


class ScriptedProvider(ChatProvider):
    """Replays canned assistant turns in order; running off the end is an error.

    Tool calls in the script are ``{"name": ..., "arguments": {...}}`` with an
    optional ``"id"``; missing ids are numbered per provider, so repeated runs
    of the same script produce identical transcripts.
    """

    def __init__(self, script: Iterable[ScriptedTurn | dict | str], config: ProviderConfig | None = None):
        self.config = config or _MOCK_CONFIG
        self._script = [ScriptedTurn.coerce(item) for item in script]
        self._pos = 0
        self._ids = itertools.count(1)
        self._lock = threading.Lock()
        self._last_latency = 0.0
        self.requests: list[tuple[list[ChatTurn], list[str]]] = []

    @property
    def remaining(self) -> int:
        return len(self._script) - self._pos

    def complete(self, history, tools):
        with self._lock:
            if self._pos >= len(self._script):
                raise ScriptExhausted(f"script exhausted after {self._pos} turns")
            item = self._script[self._pos]
            self._pos += 1
            self.requests.append((list(history), [t.name for t in tools]))
            calls = []
            for raw in item.tool_calls:
                args = raw.get("arguments", {})
                if isinstance(args, str):
                    args = _parse_arguments(raw.get("name", "?"), args)
                call_id = raw.get("id") or f"call_{next(self._ids)}"
                calls.append(ToolCallRequest(call_id, raw["name"], dict(args)))
            self._last_latency = item.wall_time
        return ChatTurn("assistant", item.content, tuple(calls)), item.input_tokens, item.output_tokens

    def simulated_latency(self) -> float | None:
        return self._last_latency


def _parse_arguments(name: str, raw: str) -> dict:
    try:
        args = json.loads(raw) if raw.strip() else {}
    except json.JSONDecodeError as exc:
        raise MalformedToolCall(f"tool {name!r}: arguments are not JSON: {raw[:200]!r}") from exc
    if not isinstance(args, dict):
        raise MalformedToolCall(f"tool {name!r}: arguments must be an object")
    return args


_RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504}


class OpenAICompatibleProvider(ChatProvider):
    """Chat-completions client with exponential backoff on transient failures."""

    def __init__(self, config: ProviderConfig, *, client: httpx.Client | None = None,
                 rate_limiter: RateLimiter | None = None, backoff_base: float = 1.0,
                 sleep: Callable[[float], None] = time.sleep):
        if not config.endpoint:
            raise ValueError("OpenAI-compatible provider needs an endpoint")
        self.config = config
        self._client = client or httpx.Client(timeout=config.request_timeout)
        self._limiter = rate_limiter or GLOBAL_RATE_LIMITER
        self._backoff = backoff_base
        self._sleep = sleep

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key_env:
            key = os.environ.get(self.config.api_key_env)
            if not key:
                raise ProviderRefusal(f"environment variable {self.config.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _payload(self, history, tools) -> dict:
        messages = []
        for turn in history:
            msg: dict[str, Any] = {"role": turn.role, "content": turn.content}
            if turn.tool_calls:
                msg["tool_calls"] = [
                    {"id": c.call_id, "type": "function",
                     "function": {"name": c.tool_name, "arguments": json.dumps(c.arguments)}}
                    for c in turn.tool_calls
                ]
            if turn.tool_call_id:
                msg["tool_call_id"] = turn.tool_call_id
            messages.append(msg)
        payload: dict[str, Any] = {"model": self.config.model_name, "messages": messages}
        if tools:
            payload["tools"] = [t.to_wire() for t in tools]
        payload.update(self.config.extra_body)
        return payload

    def complete(self, history, tools):
        url = self.config.endpoint.rstrip("/") + "/chat/completions"
        payload = self._payload(history, tools)
        headers = self._headers()
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                delay = self._backoff * 2 ** (attempt - 1)
                logger.warning("retrying %s in %.1fs (%s)", self.config.model_name, delay, last_error)
                self._sleep(delay)
            self._limiter.acquire()
            try:
                resp = self._client.post(url, json=payload, headers=headers,
                                         timeout=self.config.request_timeout)
            except httpx.TransportError as exc:
                last_error = exc
                continue
            if resp.status_code in _RETRYABLE_STATUS:
                last_error = TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                continue
            if resp.status_code >= 400:
                raise ProviderRefusal(f"HTTP {resp.status_code}: {resp.text[:500]}")
            return self._parse(resp.json())
        raise TransportError(f"{self.config.model_name}: giving up after "
                             f"{self.config.max_retries + 1} attempts: {last_error}")

    def _parse(self, body: dict) -> tuple[ChatTurn, int, int]:
        try:
            message = body["choices"][0]["message"]
        except (KeyError, IndexError, TypeError):
            raise ProviderRefusal(f"unexpected response shape: {str(body)[:300]}") from None
        if message.get("refusal"):
            raise ProviderRefusal(message["refusal"])
        calls = []
        for raw in message.get("tool_calls") or ():
            fn = raw.get("function", {})
            name = fn.get("name")
            if not name:
                raise MalformedToolCall(f"tool call without a name: {raw!r}")
            calls.append(ToolCallRequest(raw.get("id") or f"call_{len(calls)}", name,
                                         _parse_arguments(name, fn.get("arguments") or "")))
        usage = body.get("usage") or {}
        turn = ChatTurn("assistant", message.get("content") or "", tuple(calls))
        return turn, int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0))


def make_provider(config: ProviderConfig, **kwargs) -> ChatProvider:
    if config.provider_id == "mock":
        raise ValueError("mock providers are built from a script, see ScriptedProvider")
    return OpenAICompatibleProvider(config, **kwargs)


def validate_session(turns: Sequence[ChatTurn]) -> list[str]:
    """Problems with call/result pairing; empty list means the session is well formed."""
    problems = []
    pending: set[str] = set()
    seen: set[str] = set()
    for idx, turn in enumerate(turns):
        if turn.role == "assistant":
            if pending:
                problems.append(f"turn {idx}: chat call while results pending for {sorted(pending)}")
                pending = set()
            for call in turn.tool_calls:
                if call.call_id in seen:
                    problems.append(f"turn {idx}: duplicate call id {call.call_id}")
                seen.add(call.call_id)
                pending.add(call.call_id)
        elif turn.role == "tool":
            if turn.tool_call_id not in pending:
                problems.append(f"turn {idx}: result for unknown call {turn.tool_call_id}")
            pending.discard(turn.tool_call_id)
    if pending:
        problems.append(f"unanswered calls at end: {sorted(pending)}")
    return problems
