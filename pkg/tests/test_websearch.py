from __future__ import annotations

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from agentfix.errors import TransportError
from agentfix.websearch import (
    EmptyQuery,
    FixtureBackend,
    QuotaExceeded,
    SearchClient,
    SearchError,
    SearchResult,
    SerpApiBackend,
    filter_results,
    is_excluded,
    registrable_domain,
    search,
)


def _results(urls):
    return [{"title": f"r{i}", "url": u, "snippet": "s"} for i, u in enumerate(urls)]


FIVE = ["https://stackoverflow.com/q/1", "https://docs.python.org/3/", "https://meta.stackoverflow.com/a",
        "https://github.com/x/y", "https://pypi.org/p/z"]


def test_excludes_source_site_and_renumbers():
    out = search(FixtureBackend({"q": _results(FIVE)}), "q", {"stackoverflow.com"}, limit=5)
    assert [r.domain for r in out] == ["python.org", "github.com", "pypi.org"]
    assert [r.rank for r in out] == [1, 2, 3]


def test_disjoint_exclusion_is_truncation():
    out = search(FixtureBackend({"q": _results(FIVE)}), "q", {"example.com"}, limit=2)
    assert [r.url for r in out] == FIVE[:2]


def test_empty_query():
    with pytest.raises(EmptyQuery):
        search(FixtureBackend({}), "  ")


def test_limit_bounds():
    with pytest.raises(ValueError):
        search(FixtureBackend({}), "q", limit=0)


@pytest.mark.parametrize("kind, error", [("quota", QuotaExceeded), ("transport", TransportError)])
def test_fixture_failures(kind, error):
    with pytest.raises(error):
        search(FixtureBackend({"q": {"error": kind}}), "q")


def test_registrable_domain():
    assert registrable_domain("https://meta.stackoverflow.com/q/1") == "stackoverflow.com"
    assert registrable_domain("WWW.Example.CO.UK.") == "example.co.uk"
    assert registrable_domain("localhost") == "localhost"
    assert registrable_domain("bob.github.io") == "bob.github.io"


def test_is_excluded_subdomains_only():
    assert is_excluded("https://a.b.stackoverflow.com/x", ["stackoverflow.com"])
    assert is_excluded("https://stackoverflow.com", ["https://meta.stackoverflow.com/q"])
    assert not is_excluded("https://notstackoverflow.com", ["stackoverflow.com"])
    assert not is_excluded("https://alice.github.io", ["bob.github.io"])


_domains = st.sampled_from(["stackoverflow.com", "github.com", "python.org", "langchain.com",
                            "meta.stackoverflow.com", "x.github.com", "huggingface.co"])


@given(st.lists(_domains, max_size=10), st.sets(_domains, max_size=3), st.integers(1, 10))
def test_filter_idempotent(domains, exclude, limit):
    results = [SearchResult(f"t{i}", f"https://{d}/p", "", i) for i, d in enumerate(domains, 1)]
    once = filter_results(results, exclude, limit)
    assert filter_results(once, exclude, limit) == once
    assert len(once) <= limit


def test_client_default_limit_and_queries():
    backend = FixtureBackend({"q": _results(FIVE * 3)})
    client = SearchClient(backend, default_limit=4)
    assert len(client.search("q")) == 4
    assert backend.queries == ["q"]


def test_serpapi_backend(monkeypatch):
    monkeypatch.setenv("SERP_TEST", "key")
    seen = {}

    def handler(request):
        seen["q"] = request.url.params["q"]
        return httpx.Response(200, json={"organic_results": [
            {"title": "a", "link": "https://stackoverflow.com/q", "snippet": ""},
            {"title": "b", "link": "https://docs.python.org/", "snippet": "doc"}]})

    backend = SerpApiBackend("SERP_TEST", client=httpx.Client(transport=httpx.MockTransport(handler)))
    out = search(backend, "retrievalqa", {"stackoverflow.com"})
    assert "-site:stackoverflow.com" in seen["q"]
    assert [r.title for r in out] == ["b"]


def test_serpapi_errors(monkeypatch):
    monkeypatch.delenv("SERP_TEST", raising=False)
    backend = SerpApiBackend("SERP_TEST", client=httpx.Client(
        transport=httpx.MockTransport(lambda r: httpx.Response(429))))
    with pytest.raises(SearchError):
        search(backend, "q")
    monkeypatch.setenv("SERP_TEST", "k")
    with pytest.raises(QuotaExceeded):
        search(backend, "q")
