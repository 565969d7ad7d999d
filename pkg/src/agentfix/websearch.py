"""Web search with mandatory source-site exclusion.

Exclusion works on registrable domains: excluding ``stackoverflow.com`` also
drops ``meta.stackoverflow.com`` and any other subdomain, and an exclusion
given as a subdomain (``discuss.huggingface.co``) widens to its registrable
domain. That keeps mirrors and sibling hosts from leaking benchmark answers.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Protocol
from urllib.parse import urlsplit

import httpx
import tldextract

from .errors import AgentFixError, TransportError
from .llm import GLOBAL_RATE_LIMITER, RateLimiter

logger = logging.getLogger(__name__)

DEFAULT_LIMIT = 5


class SearchError(AgentFixError):
    pass


class EmptyQuery(SearchError):
    pass


class QuotaExceeded(SearchError):
    pass


# bundled suffix-list snapshot only; never fetch at runtime. Private suffixes
# (github.io and the like) count, so separate user sites stay separate.
_extract = tldextract.TLDExtract(suffix_list_urls=(), cache_dir=None, include_psl_private_domains=True)


def _host(url_or_host: str) -> str:
    text = url_or_host.strip().lower()
    if "://" not in text:
        text = "//" + text
    host = urlsplit(text).hostname or ""
    return host.rstrip(".")


@lru_cache(maxsize=4096)
def registrable_domain(url_or_host: str) -> str:
    """``https://meta.stackoverflow.com/q/1`` -> ``stackoverflow.com``.

    Hosts without a public suffix (``localhost``, IP literals) are returned as-is.
    """
    host = _host(url_or_host)
    parts = _extract(host)
    domain = getattr(parts, "top_domain_under_public_suffix", None)
    if domain is None:  # tldextract < 5.2
        domain = parts.registered_domain
    return domain or host


def is_excluded(url_or_host: str, exclude_domains: Iterable[str]) -> bool:
    host = _host(url_or_host)
    reg = registrable_domain(host)
    for ex in exclude_domains:
        ex_reg = registrable_domain(ex)
        if not ex_reg:
            continue
        if reg == ex_reg or host == ex_reg or host.endswith("." + ex_reg):
            return True
    return False


@dataclass(frozen=True)
class SearchResult:
    title: str
    url: str
    snippet: str
    rank: int
    domain: str = ""

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be positive")
        if not self.domain:
            object.__setattr__(self, "domain", registrable_domain(self.url))

    @classmethod
    def from_dict(cls, data: dict, rank: int | None = None) -> "SearchResult":
        return cls(
            title=data.get("title", ""),
            url=data.get("url") or data.get("link", ""),
            snippet=data.get("snippet", ""),
            rank=int(rank if rank is not None else data.get("rank", data.get("position", 1))),
        )

    def to_dict(self) -> dict:
        return {"title": self.title, "url": self.url, "snippet": self.snippet,
                "rank": self.rank, "domain": self.domain}


def filter_results(results: Iterable[SearchResult], exclude_domains: Iterable[str],
                   limit: int) -> list[SearchResult]:
    """Drop excluded domains, truncate to ``limit`` and renumber ranks 1..n."""
    exclude = [d for d in exclude_domains if d]
    kept = [r for r in results if not is_excluded(r.url, exclude)]
    kept.sort(key=lambda r: r.rank)
    return [replace(r, rank=i) for i, r in enumerate(kept[:limit], 1)]


class SearchBackend(Protocol):
    max_results: int

    def fetch(self, query: str, count: int, exclude_domains: frozenset[str]) -> list[SearchResult]:
        ...


class FixtureBackend:
    """Canned results keyed by query, loaded from a JSON object ``{query: [result, ...]}``.

    Unknown queries return no results. A value of ``{"error": "quota"}`` or
    ``{"error": "transport"}`` simulates the corresponding failure.
    """

    max_results = 100

    def __init__(self, mapping: dict[str, list[dict] | dict]):
        self._mapping = mapping
        self.queries: list[str] = []

    @classmethod
    def from_file(cls, path: Path | str) -> "FixtureBackend":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def fetch(self, query, count, exclude_domains):
        self.queries.append(query)
        entry = self._mapping.get(query, [])
        if isinstance(entry, dict):
            kind = entry.get("error")
            if kind == "quota":
                raise QuotaExceeded("fixture: search quota exhausted")
            raise TransportError(f"fixture: simulated {kind or 'transport'} failure")
        return [SearchResult.from_dict(item, rank=i) for i, item in enumerate(entry, 1)]


class SerpApiBackend:
    """Google results through SerpAPI. The key is read from ``api_key_env``."""

    max_results = 100

    def __init__(self, api_key_env: str = "SERPAPI_API_KEY",
                 endpoint: str = "https://serpapi.com/search.json", timeout: float = 30.0,
                 client: httpx.Client | None = None, rate_limiter: RateLimiter | None = None):
        self.api_key_env = api_key_env
        self.endpoint = endpoint
        self._client = client or httpx.Client(timeout=timeout)
        self._limiter = rate_limiter or GLOBAL_RATE_LIMITER

    def fetch(self, query, count, exclude_domains):
        key = os.environ.get(self.api_key_env)
        if not key:
            raise SearchError(f"environment variable {self.api_key_env} is not set")
        # -site: narrows upstream; the post-filter remains the guarantee
        q = " ".join([query] + [f"-site:{registrable_domain(d)}" for d in sorted(exclude_domains)])
        self._limiter.acquire()
        try:
            resp = self._client.get(self.endpoint, params={
                "engine": "google", "q": q, "num": count, "api_key": key})
        except httpx.TransportError as exc:
            raise TransportError(f"search transport failure: {exc}") from exc
        if resp.status_code == 429:
            raise QuotaExceeded("search API rate limit / quota exceeded")
        if resp.status_code >= 400:
            raise TransportError(f"search API HTTP {resp.status_code}: {resp.text[:200]}")
        body = resp.json()
        if "error" in body:
            message = str(body["error"])
            if "searches" in message.lower() or "quota" in message.lower():
                raise QuotaExceeded(message)
            if "hasn't returned any results" in message:
                return []
            raise TransportError(message)
        return [SearchResult.from_dict(item, rank=i)
                for i, item in enumerate(body.get("organic_results", []), 1)]


class SearchClient:
    def __init__(self, backend: SearchBackend, default_limit: int = DEFAULT_LIMIT):
        self.backend = backend
        self.default_limit = default_limit

    def search(self, query: str, exclude_domains: Iterable[str] = (),
               limit: int | None = None) -> list[SearchResult]:
        return search(self.backend, query, exclude_domains, limit or self.default_limit)


def search(backend: SearchBackend, query: str, exclude_domains: Iterable[str] = (),
           limit: int = DEFAULT_LIMIT) -> list[SearchResult]:
    if not query or not query.strip():
        raise EmptyQuery("search query is empty")
    if limit < 1 or limit > backend.max_results:
        raise ValueError(f"limit must be in 1..{backend.max_results}")
    exclude = frozenset(d for d in exclude_domains if d)
    # over-fetch so that filtering still leaves `limit` results in the common case
    count = min(backend.max_results, limit * 2 + 5)
    raw = backend.fetch(query.strip(), count, exclude)
    return filter_results(raw, exclude, limit)
