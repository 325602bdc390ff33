"""Tool adapters: fixture corpus, canonical serializations, extraction, gateways."""

from __future__ import annotations

import json
import os

import pytest

from dossier.tools import (
    CaptureLog,
    FixtureCorpus,
    FixtureScrapeClient,
    FixtureSearchClient,
    InvalidUrl,
    ReplayGateway,
    ScriptedGateway,
    ScriptExhausted,
    SearchEntry,
    SearchResultList,
    ToolError,
    extract_text,
    validate_url,
)


@pytest.fixture
def corpus() -> FixtureCorpus:
    return FixtureCorpus(
        {
            "searches": {
                "yc w26 list": [
                    {"title": "W26 batch", "url": "http://yc.example/w26", "snippet": "companies"},
                    {"title": "Launch tracker", "url": "http://tracker.example", "snippet": "founders"},
                    {"title": "API docs", "url": "http://api.example", "snippet": "json"},
                ]
            },
            "pages": {
                "http://yc.example/w26": {"text": "W26 companies: alpha, beta."},
                "http://broken.example/x": {"error": "404 file not found"},
            },
            "scripts": {"default": [{"kind": "finish", "parameters": {}}]},
        }
    )


class TestFixtureSearch:
    def test_planted_query_round_trip(self, corpus):
        client = FixtureSearchClient(corpus)
        result = client.search("yc w26 list")
        assert len(result.entries) == 3
        assert result.to_body() == result.to_body()  # byte-stable
        assert result.to_body().startswith("query: yc w26 list\nresults: 3\n1. title: W26 batch")

    def test_unknown_query_noted_empty(self, corpus):
        result = FixtureSearchClient(corpus).search("nothing planted")
        assert result.entries == []
        assert "(no results found)" in result.to_body()

    def test_empty_query_rejected(self, corpus):
        with pytest.raises(ToolError):
            FixtureSearchClient(corpus).search("")


class TestFixtureScrape:
    def test_planted_page_verbatim(self, corpus):
        page = FixtureScrapeClient(corpus).scrape("http://yc.example/w26")
        assert page.extracted_text == "W26 companies: alpha, beta."
        assert page.fetch_status == "ok"

    def test_planted_404(self, corpus):
        page = FixtureScrapeClient(corpus).scrape("http://broken.example/x")
        assert page.fetch_status.startswith("error")
        assert page.to_body() == "404 file not found"

    def test_unmapped_url_is_not_found(self, corpus):
        page = FixtureScrapeClient(corpus).scrape("http://nowhere.example/")
        assert "404 file not found" in page.to_body()

    def test_malformed_url_rejected_before_fetch(self, corpus):
        with pytest.raises(InvalidUrl):
            FixtureScrapeClient(corpus).scrape("not a url")
        with pytest.raises(InvalidUrl):
            validate_url("ftp://example.com/x")


class TestSerialization:
    def test_search_body_field_order(self):
        result = SearchResultList(
            query="q", entries=[SearchEntry(title="T", url="U", snippet="S")], retrieved_at=123.0
        )
        assert result.to_body() == "query: q\nresults: 1\n1. title: T\n   url: U\n   snippet: S"

    def test_retrieved_at_excluded_from_body(self):
        a = SearchResultList(query="q", entries=[], retrieved_at=1.0)
        b = SearchResultList(query="q", entries=[], retrieved_at=2.0)
        assert a.to_body() == b.to_body()


class TestExtractText:
    def test_strips_markup_keeps_paragraphs_and_links(self):
        html = (
            "<html><head><style>p{}</style><script>x()</script></head>"
            "<body><h1>Title</h1><p>First  para.</p>"
            '<p>See <a href="http://x.example/doc">the doc</a> here.</p></body></html>'
        )
        text = extract_text(html)
        assert "Title" in text
        assert "First para." in text
        assert "the doc (http://x.example/doc)" in text
        assert "x()" not in text and "p{}" not in text
        assert "\n" in text  # paragraph structure preserved

    def test_entities_decoded(self):
        assert "a & b" in extract_text("<p>a &amp; b</p>")


class TestCorpusLoading:
    def test_round_trip_via_disk(self, corpus, tmp_path):
        path = tmp_path / "corpus.json"
        path.write_text(
            json.dumps(
                {
                    "format": "fixture-corpus",
                    "version": 1,
                    "searches": corpus.searches,
                    "pages": corpus.pages,
                    "scripts": corpus.scripts,
                }
            ),
            encoding="utf-8",
        )
        loaded = FixtureCorpus.load(path)
        assert loaded.searches == corpus.searches
        assert loaded.script("anything") == [{"kind": "finish", "parameters": {}}]

    def test_unknown_script_without_default(self):
        with pytest.raises(KeyError):
            FixtureCorpus({}).script("missing")

    def test_bad_format_rejected(self):
        with pytest.raises(ValueError):
            FixtureCorpus({"format": "other"})


@pytest.mark.skipif(
    not os.environ.get("SEARCH_API_URL"),
    reason="manual live smoke test; set SEARCH_API_URL (and SEARCH_API_KEY) to run",
)
def test_live_search_smoke():
    from dossier.tools import LiveSearchClient

    client = LiveSearchClient(os.environ["SEARCH_API_URL"], os.environ.get("SEARCH_API_KEY", ""))
    result = client.search("open source deep research agents")
    assert len(result.entries) >= 1


class TestTokenBucket:
    def make_bucket(self, capacity=2.0, rate=1.0):
        from dossier.tools import TokenBucket

        clock = {"t": 0.0}
        bucket = TokenBucket(capacity, rate, clock=lambda: clock["t"],
                             sleep=lambda s: clock.__setitem__("t", clock["t"] + s))
        return bucket, clock

    def test_burst_then_refill(self):
        bucket, clock = self.make_bucket(capacity=2.0, rate=1.0)
        assert bucket.try_acquire()
        assert bucket.try_acquire()
        assert not bucket.try_acquire()
        clock["t"] += 1.0
        assert bucket.try_acquire()

    def test_acquire_blocks_until_refill(self):
        bucket, clock = self.make_bucket(capacity=1.0, rate=2.0)
        bucket.acquire()
        bucket.acquire(timeout=5.0)  # sleeps via the fake clock
        assert clock["t"] >= 0.5

    def test_acquire_times_out(self):
        bucket, clock = self.make_bucket(capacity=1.0, rate=0.001)
        bucket.acquire()
        with pytest.raises(ToolError):
            bucket.acquire(timeout=2.0)


class TestGateways:
    def test_scripted_gateway_by_index(self):
        gw = ScriptedGateway([{"a": 1}, {"b": 2}])
        assert gw.complete({"messages": []}) == {"a": 1}
        assert gw.complete({"messages": []}) == {"b": 2}
        with pytest.raises(ScriptExhausted):
            gw.complete({"messages": []})

    def test_capture_log_records_every_call_once(self, tmp_path):
        capture = CaptureLog(tmp_path / "cap.jsonl")
        gw = ScriptedGateway([{"a": 1}, {"b": 2}], capture=capture)
        gw.complete({"messages": [{"role": "user", "content": "ctx1"}]})
        gw.complete({"messages": [{"role": "user", "content": "ctx2"}]})
        assert [r["index"] for r in capture.records] == [0, 1]
        loaded = CaptureLog.load(tmp_path / "cap.jsonl")
        assert [r["response"] for r in loaded.records] == [{"a": 1}, {"b": 2}]
        assert loaded.records[0]["request"]["messages"][0]["content"] == "ctx1"

    def test_replay_gateway_feeds_back_responses(self, tmp_path):
        capture = CaptureLog(tmp_path / "cap.jsonl")
        gw = ScriptedGateway([{"a": 1}], capture=capture)
        gw.complete({"messages": []})
        replayed = ReplayGateway(CaptureLog.load(tmp_path / "cap.jsonl"))
        assert replayed.complete({"messages": ["ignored"]}) == {"a": 1}
