"""Web context for instruction evolving.

The four-stage pipeline: search the web for visually similar images, have a
chat backend distill their titles into follow-up text queries, run those
queries, then summarize everything into one context note. Every stage is
optional in the sense that failures degrade to whatever was gathered so far;
captioning must work from an empty bundle too.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, Sequence, Union

from .errors import BackendError, ClientError, MalformedBackendOutput
from .model import ImageRef
from .backends.base import ChatBackend, ChatMessage

IMAGE_SEARCH_K_DEFAULT = 5
MAX_QUERIES_DEFAULT = 3


@dataclass(frozen=True)
class WebImageHit:
    """One visually similar web image; titles may be empty."""

    title: str
    source_url: str
    rank: int

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")


@dataclass(frozen=True)
class SearchResult:
    query: str
    snippets: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.query:
            raise ValueError("query is empty")
        object.__setattr__(self, "snippets", tuple(self.snippets))


@dataclass(frozen=True)
class ContextBundle:
    """Everything the web contributed; ``summary`` is what prompts consume."""

    image_hits: tuple[WebImageHit, ...] = ()
    queries: tuple[str, ...] = ()
    results: tuple[SearchResult, ...] = ()
    summary: str = ""
    log: tuple[str, ...] = ()

    def __post_init__(self):
        ranks = [h.rank for h in self.image_hits]
        if len(ranks) != len(set(ranks)):
            raise ValueError("image hit ranks must be unique")
        if (self.image_hits or self.results) and not self.summary.strip():
            raise ValueError("summary must be non-empty when hits or results exist")

    @classmethod
    def empty(cls, log: Sequence[str] = ()) -> "ContextBundle":
        return cls(log=tuple(log))

    @property
    def is_empty(self) -> bool:
        return not (self.image_hits or self.queries or self.results or self.summary)


def bundle_to_dict(bundle: ContextBundle) -> dict:
    return {
        "image_hits": [
            {"title": h.title, "url": h.source_url, "rank": h.rank} for h in bundle.image_hits
        ],
        "queries": list(bundle.queries),
        "results": [
            {"query": r.query, "snippets": list(r.snippets)} for r in bundle.results
        ],
        "summary": bundle.summary,
        "log": list(bundle.log),
    }


def bundle_from_dict(raw: dict) -> ContextBundle:
    return ContextBundle(
        image_hits=tuple(
            WebImageHit(title=h["title"], source_url=h["url"], rank=h["rank"])
            for h in raw.get("image_hits", [])
        ),
        queries=tuple(raw.get("queries", [])),
        results=tuple(
            SearchResult(query=r["query"], snippets=tuple(r["snippets"]))
            for r in raw.get("results", [])
        ),
        summary=raw.get("summary", ""),
        log=tuple(raw.get("log", [])),
    )


class ImageSearchClient(Protocol):
    def search_similar(self, image: ImageRef, k: int) -> Sequence[WebImageHit]: ...


class TextSearchClient(Protocol):
    def search(self, query: str) -> SearchResult: ...


# --- fixture clients ----------------------------------------------------------


class FixtureImageSearch:
    """Serves hits from a committed ``image_hits.json`` (list of title/url)."""

    def __init__(self, hits: Sequence[WebImageHit]):
        self._hits = tuple(hits)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "FixtureImageSearch":
        records = json.loads(Path(path).read_text(encoding="utf-8"))
        hits = [
            WebImageHit(title=r.get("title", ""), source_url=r["url"], rank=i + 1)
            for i, r in enumerate(records)
        ]
        return cls(hits)

    def search_similar(self, image: ImageRef, k: int) -> Sequence[WebImageHit]:
        return self._hits[:k]


class FixtureTextSearch:
    """Serves snippets from per-query files (``searches/*.json``)."""

    def __init__(self, results: dict[str, tuple[str, ...]]):
        self._results = dict(results)

    @classmethod
    def from_dir(cls, directory: Union[str, Path]) -> "FixtureTextSearch":
        results: dict[str, tuple[str, ...]] = {}
        directory = Path(directory)
        if directory.is_dir():
            for path in sorted(directory.glob("*.json")):
                record = json.loads(path.read_text(encoding="utf-8"))
                results[record["query"]] = tuple(record["snippets"])
        return cls(results)

    def search(self, query: str) -> SearchResult:
        return SearchResult(query=query, snippets=self._results.get(query, ()))


class EmptyImageSearch:
    def search_similar(self, image: ImageRef, k: int) -> Sequence[WebImageHit]:
        return ()


# --- HTTP clients ---------------------------------------------------------------


class HttpImageSearch:
    """POSTs {image_b64, media_kind, k}; expects {hits: [{title, url}]}."""

    def __init__(self, endpoint: str, api_key_env: Optional[str] = None, transport=None):
        from .backends.http import default_transport

        self._endpoint = endpoint
        self._api_key_env = api_key_env
        self._transport = transport or default_transport()

    def search_similar(self, image: ImageRef, k: int) -> Sequence[WebImageHit]:
        from .backends.http import _auth_headers

        try:
            body = self._transport.post(
                self._endpoint,
                _auth_headers(self._api_key_env),
                {
                    "image_b64": base64.b64encode(image.payload()).decode("ascii"),
                    "media_kind": image.media_kind.value,
                    "k": k,
                },
                30.0,
            )
            return [
                WebImageHit(title=r.get("title", ""), source_url=r["url"], rank=i + 1)
                for i, r in enumerate(body["hits"])
            ]
        except (BackendError, KeyError, TypeError) as exc:
            raise ClientError(f"image search failed: {exc}") from exc


class HttpTextSearch:
    """POSTs {query}; expects {snippets: [...]}."""

    def __init__(self, endpoint: str, api_key_env: Optional[str] = None, transport=None):
        from .backends.http import default_transport

        self._endpoint = endpoint
        self._api_key_env = api_key_env
        self._transport = transport or default_transport()

    def search(self, query: str) -> SearchResult:
        from .backends.http import _auth_headers

        try:
            body = self._transport.post(
                self._endpoint, _auth_headers(self._api_key_env), {"query": query}, 30.0
            )
            return SearchResult(query=query, snippets=tuple(body["snippets"]))
        except (BackendError, KeyError, TypeError) as exc:
            raise ClientError(f"text search failed: {exc}") from exc


# --- pipeline operations --------------------------------------------------------


def image_search(image: ImageRef, k: int, client: ImageSearchClient) -> list[WebImageHit]:
    """At most k similar-image hits, re-ranked 1..len after truncation."""
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = list(client.search_similar(image, k))[:k]
    return [
        WebImageHit(title=h.title, source_url=h.source_url, rank=i + 1)
        for i, h in enumerate(hits)
    ]


_QUERY_SYSTEM = (
    "You turn titles of visually similar web images into short search queries "
    "that would uncover what the pictured subject is. Reply with one query per "
    "line and nothing else."
)


def summarize_queries(
    hits: Sequence[WebImageHit],
    backend: ChatBackend,
    max_queries: int = MAX_QUERIES_DEFAULT,
    instruction: Optional[str] = None,
) -> list[str]:
    """Distill hit titles into at most ``max_queries`` follow-up queries.

    Empty hits short-circuit to an empty list without calling the backend.
    """
    if not hits:
        return []
    lines = [f"{h.rank}. {h.title}" if h.title else f"{h.rank}. (untitled)" for h in hits]
    prompt = "Titles of similar images:\n" + "\n".join(lines)
    if instruction:
        prompt += f"\n\nThe user asked: {instruction}"
    reply = backend.chat(
        (ChatMessage("system", _QUERY_SYSTEM), ChatMessage("user", prompt))
    )
    queries = [q.strip() for q in reply.splitlines() if q.strip()]
    if not queries:
        raise MalformedBackendOutput("query summarizer returned no queries")
    return queries[:max_queries]


_SUMMARY_SYSTEM = (
    "You write one compact paragraph of factual context about an image, based "
    "on web findings. Mention names, products, or events the findings support. "
    "No speculation beyond them."
)


def _fallback_summary(hits: Sequence[WebImageHit], results: Sequence[SearchResult]) -> str:
    parts = []
    titles = [h.title for h in hits if h.title]
    if hits:
        parts.append(f"{len(hits)} similar images found" + (": " + "; ".join(titles) if titles else ""))
    for result in results:
        if result.snippets:
            parts.append(f"{result.query}: {result.snippets[0]}")
    return ". ".join(parts) if parts else "web context found but not summarized"


@dataclass
class ContextSettings:
    k: int = IMAGE_SEARCH_K_DEFAULT
    max_queries: int = MAX_QUERIES_DEFAULT


def build_context(
    image: ImageRef,
    user_instruction: str,
    image_client: ImageSearchClient,
    text_client: TextSearchClient,
    backend: ChatBackend,
    settings: Optional[ContextSettings] = None,
) -> ContextBundle:
    """Run the full pipeline, degrading to a partial bundle on any failure.

    Budget per invocation: one image search, at most ``max_queries`` text
    searches, and at most two chat calls. Never raises; degradations are
    recorded in the bundle's log.
    """
    settings = settings or ContextSettings()
    log: list[str] = []

    hits: list[WebImageHit] = []
    try:
        hits = image_search(image, settings.k, image_client)
    except (ClientError, BackendError) as exc:
        log.append(f"image search failed: {exc}")

    queries: list[str] = []
    if hits:
        try:
            queries = summarize_queries(
                hits, backend, max_queries=settings.max_queries, instruction=user_instruction
            )
        except (BackendError, ClientError) as exc:
            log.append(f"query summarization failed: {exc}")

    results: list[SearchResult] = []
    for query in queries:
        try:
            results.append(text_client.search(query))
        except (ClientError, BackendError) as exc:
            log.append(f"text search failed for {query!r}: {exc}")

    if not hits and not results:
        return ContextBundle.empty(log=log)

    findings = ["Similar image titles:"]
    findings += [f"- {h.title}" for h in hits if h.title]
    for result in results:
        findings.append(f"Search results for {result.query!r}:")
        findings += [f"- {s}" for s in result.snippets]
    try:
        summary = backend.chat(
            (ChatMessage("system", _SUMMARY_SYSTEM), ChatMessage("user", "\n".join(findings)))
        ).strip()
        if not summary:
            raise MalformedBackendOutput("summarizer returned empty text")
    except BackendError as exc:
        log.append(f"context summarization failed: {exc}")
        summary = _fallback_summary(hits, results)

    return ContextBundle(
        image_hits=tuple(hits),
        queries=tuple(queries),
        results=tuple(results),
        summary=summary,
        log=tuple(log),
    )
