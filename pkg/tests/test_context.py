from __future__ import annotations

import json

import pytest

from captionsmith.backends import ScriptedChat
from captionsmith.context import (
    ContextBundle,
    ContextSettings,
    FixtureImageSearch,
    FixtureTextSearch,
    SearchResult,
    WebImageHit,
    build_context,
    bundle_from_dict,
    bundle_to_dict,
    image_search,
    summarize_queries,
)
from captionsmith.errors import ClientError, MalformedBackendOutput


def hits(n: int, prefix: str = "Tesla Cybercab") -> list[WebImageHit]:
    return [WebImageHit(title=f"{prefix} page {i}", source_url=f"u{i}", rank=i + 1) for i in range(n)]


class CountingImageSearch:
    def __init__(self, hits):
        self._hits = hits
        self.calls = 0

    def search_similar(self, image, k):
        self.calls += 1
        return self._hits


class FailingImageSearch:
    def search_similar(self, image, k):
        raise ClientError("quota exhausted")


class CountingTextSearch:
    def __init__(self, snippets=("snippet",)):
        self.snippets = snippets
        self.queries = []

    def search(self, query):
        self.queries.append(query)
        return SearchResult(query=query, snippets=tuple(self.snippets))


def test_image_search_truncates_and_reranks(image):
    result = image_search(image, 5, CountingImageSearch(hits(7)))
    assert len(result) == 5
    assert [h.rank for h in result] == [1, 2, 3, 4, 5]


def test_image_search_fewer_than_k(image):
    assert len(image_search(image, 5, CountingImageSearch(hits(2)))) == 2


def test_image_search_requires_positive_k(image):
    with pytest.raises(ValueError):
        image_search(image, 0, CountingImageSearch(hits(1)))


def test_summarize_queries_empty_hits_skips_backend():
    backend = ScriptedChat([])  # would raise if called
    assert summarize_queries([], backend) == []


def test_summarize_queries_one_per_line():
    backend = ScriptedChat(["tesla cybercab specs"])
    assert summarize_queries(hits(2), backend) == ["tesla cybercab specs"]


def test_summarize_queries_truncates_to_limit():
    backend = ScriptedChat(["q1\nq2\nq3\nq4\nq5"])
    assert summarize_queries(hits(2), backend, max_queries=3) == ["q1", "q2", "q3"]


def test_summarize_queries_malformed_output():
    backend = ScriptedChat(["   \n  "])
    with pytest.raises(MalformedBackendOutput):
        summarize_queries(hits(2), backend)


def test_build_context_full_chain(image):
    image_client = CountingImageSearch(hits(7))
    text_client = CountingTextSearch(snippets=("The Cybercab is a two-seat robotaxi.",))
    backend = ScriptedChat(
        [
            "tesla cybercab specs\ntesla cybercab release",
            "The image shows a Tesla Cybercab, a two-seat robotaxi.",
        ]
    )
    bundle = build_context(image, "caption this", image_client, text_client, backend)
    assert [h.rank for h in bundle.image_hits] == [1, 2, 3, 4, 5]
    assert bundle.queries == ("tesla cybercab specs", "tesla cybercab release")
    assert text_client.queries == list(bundle.queries)  # order follows query order
    assert "Cybercab" in bundle.summary
    assert not bundle.log


def test_build_context_budget(image):
    image_client = CountingImageSearch(hits(7))
    text_client = CountingTextSearch()

    class CountingChat(ScriptedChat):
        def __init__(self, entries):
            super().__init__(entries)
            self.count = 0

        def chat(self, messages):
            self.count += 1
            return super().chat(messages)

    backend = CountingChat(["q1\nq2\nq3\nq4\nq5\nq6", "summary text"])
    bundle = build_context(
        image, "i", image_client, text_client, backend, ContextSettings(k=5, max_queries=3)
    )
    assert image_client.calls == 1
    assert len(text_client.queries) == 3  # <= max_queries text searches
    assert backend.count == 2  # <= 2 chat calls
    assert bundle.summary == "summary text"


def test_empty_everything_returns_empty_bundle(image):
    bundle = build_context(
        image, "i", CountingImageSearch([]), CountingTextSearch(), ScriptedChat([])
    )
    assert bundle.is_empty
    assert bundle == ContextBundle.empty()


def test_image_search_failure_degrades_cleanly(image):
    bundle = build_context(
        image, "i", FailingImageSearch(), CountingTextSearch(), ScriptedChat([])
    )
    assert bundle.is_empty
    assert any("image search failed" in line for line in bundle.log)


def test_summarizer_failure_falls_back_deterministically(image):
    image_client = CountingImageSearch(hits(2))
    backend = ScriptedChat(["q1"])  # second call (summary) will exhaust the script
    bundle = build_context(image, "i", image_client, CountingTextSearch(), backend)
    assert bundle.summary  # fallback keeps the invariant: hits exist, summary non-empty
    assert any("summarization failed" in line for line in bundle.log)


def test_pipeline_deterministic_under_fixtures(image, tmp_path):
    hits_file = tmp_path / "image_hits.json"
    hits_file.write_text(json.dumps([{"title": "Tesla Cybercab reveal", "url": "u"}]))
    searches = tmp_path / "searches"
    searches.mkdir()
    (searches / "q.json").write_text(
        json.dumps({"query": "tesla cybercab", "snippets": ["robotaxi"]})
    )

    def run_once():
        return build_context(
            image,
            "caption this",
            FixtureImageSearch.from_file(hits_file),
            FixtureTextSearch.from_dir(searches),
            ScriptedChat(["tesla cybercab", "A Tesla Cybercab."]),
        )

    assert run_once() == run_once()


def test_bundle_serialization_round_trip(image):
    bundle = build_context(
        image,
        "i",
        CountingImageSearch(hits(2)),
        CountingTextSearch(),
        ScriptedChat(["q1", "summary"]),
    )
    assert bundle_from_dict(bundle_to_dict(bundle)) == bundle


def test_bundle_invariant_summary_required():
    with pytest.raises(ValueError):
        ContextBundle(image_hits=tuple(hits(1)), summary="")
