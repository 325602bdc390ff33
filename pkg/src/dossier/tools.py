"""External-service clients: web search, page scraping, and the model gateway.

Every backend comes in two flavors with identical contracts: a live client
that talks to the network, and a fixture client backed by an on-disk corpus
for deterministic offline runs (tests, benchmarks). The runtime never knows
which one it holds.

Fixture corpus file format (JSON, documented in docs/formats.md):

    {
      "format": "fixture-corpus", "version": 1,
      "searches": {"<query>": [{"title": ..., "url": ..., "snippet": ...}]},
      "pages":    {"<url>": {"text": ...} | {"error": "404 file not found"}},
      "scripts":  {"<key>": [ <decision object>, ... ]}
    }
"""

from __future__ import annotations

import html.parser
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional
from urllib.parse import urlparse

DEFAULT_SEARCH_TIMEOUT = 15.0
DEFAULT_SCRAPE_TIMEOUT = 30.0
DEFAULT_GATEWAY_TIMEOUT = 120.0
DEFAULT_RESULT_COUNT = 10


class ToolError(Exception):
    """A tool call failed; the runtime records the message as the product body."""


class InvalidUrl(ToolError):
    pass


class GatewayError(Exception):
    pass


class GatewayUnavailable(GatewayError):
    pass


class ScriptExhausted(GatewayError):
    pass


@dataclass
class SearchEntry:
    title: str
    url: str
    snippet: str


@dataclass
class SearchResultList:
    query: str
    entries: list[SearchEntry]
    retrieved_at: float = 0.0

    def to_body(self) -> str:
        """Canonical text form used as the search unit body (byte-stable)."""
        lines = [f"query: {self.query}", f"results: {len(self.entries)}"]
        if not self.entries:
            lines.append("(no results found)")
        for i, entry in enumerate(self.entries, start=1):
            lines.append(f"{i}. title: {entry.title}")
            lines.append(f"   url: {entry.url}")
            lines.append(f"   snippet: {entry.snippet}")
        return "\n".join(lines)


@dataclass
class ScrapedPage:
    url: str
    extracted_text: str
    fetch_status: str = "ok"  # "ok" or "error:<code or reason>"

    def to_body(self) -> str:
        return self.extracted_text


def validate_url(url: str) -> None:
    parsed = urlparse(url)
    if parsed.scheme not in ("http", "https") or not parsed.netloc:
        raise InvalidUrl(f"not a fetchable URL: {url!r}")


class TokenBucket:
    """Per-backend rate limiter: `capacity` burst, `refill_rate` tokens/second.

    Shared across runs (calls are independent); acquire() blocks up to
    `timeout` seconds, then raises ToolError so the failure surfaces as an
    observable result body like any other tool error.
    """

    def __init__(self, capacity: float, refill_rate: float, clock=time.monotonic,
                 sleep=time.sleep) -> None:
        self.capacity = float(capacity)
        self.refill_rate = float(refill_rate)
        self.clock = clock
        self.sleep = sleep
        self.tokens = float(capacity)
        self.updated = clock()
        self._lock = threading.Lock()

    def _refill(self) -> None:
        now = self.clock()
        self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.refill_rate)
        self.updated = now

    def try_acquire(self, tokens: float = 1.0) -> bool:
        with self._lock:
            self._refill()
            if self.tokens >= tokens:
                self.tokens -= tokens
                return True
            return False

    def acquire(self, tokens: float = 1.0, timeout: float = 30.0) -> None:
        deadline = self.clock() + timeout
        while True:
            with self._lock:
                self._refill()
                if self.tokens >= tokens:
                    self.tokens -= tokens
                    return
                deficit = tokens - self.tokens
            if self.clock() >= deadline:
                raise ToolError(f"rate limited: bucket empty for {timeout}s")
            self.sleep(min(deficit / self.refill_rate, max(deadline - self.clock(), 0.01)))


class _TextExtractor(html.parser.HTMLParser):
    """Plain-text extraction: markup stripped, paragraph breaks preserved,
    link targets inlined after their anchor text."""

    _SKIP = {"script", "style", "noscript", "head", "template"}
    _BREAKS = {"p", "div", "br", "li", "tr", "h1", "h2", "h3", "h4", "h5", "h6", "section", "article"}

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.parts: list[str] = []
        self._skip_depth = 0
        self._href: Optional[str] = None

    def handle_starttag(self, tag: str, attrs: list[tuple[str, Optional[str]]]) -> None:
        if tag in self._SKIP:
            self._skip_depth += 1
        elif tag == "a":
            self._href = dict(attrs).get("href")
        elif tag in self._BREAKS:
            self.parts.append("\n")

    def handle_endtag(self, tag: str) -> None:
        if tag in self._SKIP and self._skip_depth > 0:
            self._skip_depth -= 1
        elif tag == "a":
            if self._href:
                self.parts.append(f" ({self._href})")
            self._href = None
        elif tag in self._BREAKS:
            self.parts.append("\n")

    def handle_data(self, data: str) -> None:
        if self._skip_depth == 0 and data:
            self.parts.append(data)

    def text(self) -> str:
        raw = "".join(self.parts)
        lines = [" ".join(line.split()) for line in raw.split("\n")]
        out: list[str] = []
        for line in lines:
            if line:
                out.append(line)
            elif out and out[-1] != "":
                out.append("")
        while out and out[-1] == "":
            out.pop()
        return "\n".join(out)


def extract_text(html_source: str) -> str:
    parser = _TextExtractor()
    parser.feed(html_source)
    return parser.text()


class FixtureCorpus:
    """Deterministic offline stand-in for search, scrape, and gateway scripts."""

    def __init__(self, data: Optional[dict[str, Any]] = None) -> None:
        data = data or {}
        if data and data.get("format", "fixture-corpus") != "fixture-corpus":
            raise ValueError(f"not a fixture corpus: {data.get('format')!r}")
        self.searches: dict[str, list[dict[str, str]]] = data.get("searches", {})
        self.pages: dict[str, dict[str, str]] = data.get("pages", {})
        self.scripts: dict[str, list[dict[str, Any]]] = data.get("scripts", {})

    @classmethod
    def load(cls, path: str | Path) -> "FixtureCorpus":
        with open(path, encoding="utf-8") as f:
            return cls(json.load(f))

    def script(self, key: str) -> list[dict[str, Any]]:
        if key in self.scripts:
            return self.scripts[key]
        if "default" in self.scripts:
            return self.scripts["default"]
        raise KeyError(f"no decision script for {key!r} and no default script")


class FixtureSearchClient:
    """Corpus-backed search; unknown queries yield an empty, noted result list."""

    def __init__(self, corpus: FixtureCorpus, clock=None) -> None:
        self.corpus = corpus
        self.clock = clock or time.time

    def search(self, query: str) -> SearchResultList:
        if not query:
            raise ToolError("empty search query")
        rows = self.corpus.searches.get(query, [])
        entries = [
            SearchEntry(title=r["title"], url=r["url"], snippet=r.get("snippet", ""))
            for r in rows
        ]
        return SearchResultList(query=query, entries=entries, retrieved_at=self.clock())


class FixtureScrapeClient:
    """Corpus-backed scraping; planted errors come back as error-text pages."""

    def __init__(self, corpus: FixtureCorpus) -> None:
        self.corpus = corpus

    def scrape(self, url: str) -> ScrapedPage:
        validate_url(url)
        page = self.corpus.pages.get(url)
        if page is None:
            return ScrapedPage(url=url, extracted_text=f"404 file not found: {url}", fetch_status="error:404")
        if "error" in page:
            return ScrapedPage(url=url, extracted_text=page["error"], fetch_status="error:404")
        return ScrapedPage(url=url, extracted_text=page["text"], fetch_status="ok")


class LiveSearchClient:
    """SerpAPI-style JSON search endpoint (out of CI; exercised manually)."""

    def __init__(
        self,
        api_url: str,
        api_key: str = "",
        result_count: int = DEFAULT_RESULT_COUNT,
        timeout: float = DEFAULT_SEARCH_TIMEOUT,
        bucket: Optional[TokenBucket] = None,
    ) -> None:
        self.api_url = api_url
        self.api_key = api_key
        self.result_count = result_count
        self.timeout = timeout
        self.bucket = bucket

    def search(self, query: str) -> SearchResultList:
        if not query:
            raise ToolError("empty search query")
        if self.bucket is not None:
            self.bucket.acquire()
        import requests

        params = {"q": query, "num": self.result_count}
        if self.api_key:
            params["api_key"] = self.api_key
        try:
            resp = requests.get(self.api_url, params=params, timeout=self.timeout)
        except requests.RequestException as exc:
            raise ToolError(f"search request failed: {exc}") from exc
        if resp.status_code == 429:
            raise ToolError("search rate limited (429)")
        if resp.status_code >= 400:
            raise ToolError(f"search failed with status {resp.status_code}")
        payload = resp.json()
        entries = [
            SearchEntry(
                title=row.get("title", ""),
                url=row.get("link", row.get("url", "")),
                snippet=row.get("snippet", ""),
            )
            for row in payload.get("organic_results", payload.get("results", []))[: self.result_count]
        ]
        return SearchResultList(query=query, entries=entries, retrieved_at=time.time())


class LiveScrapeClient:
    """Plain HTTP fetch + text extraction. Errors become error-text pages."""

    def __init__(self, timeout: float = DEFAULT_SCRAPE_TIMEOUT,
                 bucket: Optional[TokenBucket] = None) -> None:
        self.timeout = timeout
        self.bucket = bucket

    def scrape(self, url: str) -> ScrapedPage:
        validate_url(url)
        if self.bucket is not None:
            self.bucket.acquire()
        import requests

        try:
            resp = requests.get(url, timeout=self.timeout, headers={"User-Agent": "dossier/0.1"})
        except requests.RequestException as exc:
            return ScrapedPage(url=url, extracted_text=f"fetch failed: {exc}", fetch_status="error:network")
        if resp.status_code >= 400:
            return ScrapedPage(
                url=url,
                extracted_text=f"{resp.status_code} {resp.reason.lower() if resp.reason else 'error'}: {url}",
                fetch_status=f"error:{resp.status_code}",
            )
        return ScrapedPage(url=url, extracted_text=extract_text(resp.text), fetch_status="ok")


class CaptureLog:
    """Append-only record of every gateway request/response pair.

    Supports the determinism assertions: each call appears exactly once with
    its full request context, and feeding responses back through
    ``ReplayGateway`` reproduces an identical run.
    """

    def __init__(self, path: Optional[str | Path] = None) -> None:
        self.path = Path(path) if path else None
        self.records: list[dict[str, Any]] = []
        self._lock = threading.Lock()

    def record(self, request: dict[str, Any], response: dict[str, Any]) -> None:
        with self._lock:
            entry = {"index": len(self.records), "request": request, "response": response}
            self.records.append(entry)
            if self.path:
                with open(self.path, "a", encoding="utf-8") as f:
                    f.write(json.dumps(entry, sort_keys=True, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "CaptureLog":
        log = cls()
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    log.records.append(json.loads(line))
        return log


class ScriptedGateway:
    """Gateway fixture keyed by call index; raises once the script runs out."""

    def __init__(self, responses: list[dict[str, Any]], capture: Optional[CaptureLog] = None) -> None:
        self.responses = responses
        self.capture = capture
        self.calls = 0

    def complete(self, request: dict[str, Any]) -> dict[str, Any]:
        if self.calls >= len(self.responses):
            raise ScriptExhausted(f"scripted gateway exhausted after {self.calls} calls")
        response = self.responses[self.calls]
        self.calls += 1
        if self.capture:
            self.capture.record(request, response)
        return response


class ReplayGateway:
    """Replays responses from a capture log, ignoring the incoming request."""

    def __init__(self, log: CaptureLog, capture: Optional[CaptureLog] = None) -> None:
        self.responses = [r["response"] for r in log.records]
        self.capture = capture
        self.calls = 0

    def complete(self, request: dict[str, Any]) -> dict[str, Any]:
        if self.calls >= len(self.responses):
            raise ScriptExhausted("capture log exhausted")
        response = self.responses[self.calls]
        self.calls += 1
        if self.capture:
            self.capture.record(request, response)
        return response


class LiveGateway:
    """OpenAI-compatible chat-completions gateway (provider-agnostic)."""

    def __init__(
        self,
        base_url: str,
        api_key: str = "",
        model: str = "",
        timeout: float = DEFAULT_GATEWAY_TIMEOUT,
        capture: Optional[CaptureLog] = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.model = model
        self.timeout = timeout
        self.capture = capture

    def complete(self, request: dict[str, Any]) -> dict[str, Any]:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model,
            "messages": request["messages"],
            "response_format": {"type": "json_object"},
        }
        try:
            resp = requests.post(
                f"{self.base_url}/chat/completions", json=body, headers=headers, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise GatewayUnavailable(f"gateway request failed: {exc}") from exc
        if resp.status_code >= 400:
            raise GatewayUnavailable(f"gateway returned status {resp.status_code}")
        content = resp.json()["choices"][0]["message"]["content"]
        try:
            response = json.loads(content)
        except json.JSONDecodeError as exc:
            raise GatewayError(f"gateway returned non-JSON content: {exc}") from exc
        if self.capture:
            self.capture.record(request, response)
        return response


@dataclass
class ToolSet:
    """The backends one run executes against."""

    search: Any
    scrape: Any

    @classmethod
    def fixture(cls, corpus: FixtureCorpus, clock=None) -> "ToolSet":
        return cls(search=FixtureSearchClient(corpus, clock=clock), scrape=FixtureScrapeClient(corpus))

    @classmethod
    def live(
        cls,
        search_api_url: str,
        search_api_key: str = "",
        search_timeout: float = DEFAULT_SEARCH_TIMEOUT,
        scrape_timeout: float = DEFAULT_SCRAPE_TIMEOUT,
    ) -> "ToolSet":
        return cls(
            search=LiveSearchClient(search_api_url, search_api_key, timeout=search_timeout),
            scrape=LiveScrapeClient(timeout=scrape_timeout),
        )
