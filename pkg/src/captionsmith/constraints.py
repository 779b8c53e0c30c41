"""Structured caption constraints: parsing, rendering, and verification.

A professional instruction carries its machine-checkable requirements in a
fenced block::

    ---constraints
    view: from the entrance
    sentiment: positive (confident)
    focus_content: "butterfly doors", "two-seat cabin"
    keywords: "Tesla Cybercab"
    length: min 20 words, max 60 words
    format: plain
    genre: product blurb
    ---

Keys may appear in any order, each at most once. List values are
comma-separated double-quoted items (``\\"`` and ``\\\\`` escapes). Length
values are one or two comma-separated clauses ``(min|max) <int>
(words|sentences)`` sharing one unit. ``render_constraint_block`` writes the
canonical form and round-trips through ``extract_constraint_block``.

Verification is split: length, keywords, and format are decided locally;
view, sentiment, focus_content, and genre need a judge backend.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Optional

from .errors import (
    BackendError,
    DuplicateKey,
    MalformedBackendOutput,
    MalformedBlock,
    MissingBlock,
)
from .textrules import sentence_count, word_count

if TYPE_CHECKING:  # real imports would be circular; these are structural anyway
    from .backends.base import ChatBackend
    from .model import Caption

DIMENSIONS = ("view", "sentiment", "focus_content", "keywords", "length", "format", "genre")
DETERMINISTIC_DIMENSIONS = frozenset({"length", "keywords", "format"})
JUDGED_DIMENSIONS = frozenset({"view", "sentiment", "focus_content", "genre"})


class LengthUnit(str, Enum):
    WORDS = "words"
    SENTENCES = "sentences"


class CaptionFormat(str, Enum):
    PLAIN = "plain"
    BULLETS = "bullets"
    NUMBERED = "numbered"


class Polarity(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    NEUTRAL = "neutral"


class Verdict(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    NEEDS_JUDGE = "needs_judge"
    JUDGED_PASS = "judged_pass"
    JUDGED_FAIL = "judged_fail"


def _clean_line(value: str, what: str) -> str:
    value = value.strip()
    if not value:
        raise ValueError(f"{what} must be non-empty")
    if "\n" in value or "\r" in value:
        raise ValueError(f"{what} must not span lines")
    return value


@dataclass(frozen=True)
class LengthConstraint:
    """An interval bound on caption length in one unit."""

    unit: LengthUnit
    min: Optional[int] = None
    max: Optional[int] = None

    def __post_init__(self):
        if self.min is None and self.max is None:
            raise ValueError("length constraint needs at least one of min/max")
        for bound in (self.min, self.max):
            if bound is not None and bound < 0:
                raise ValueError("length bounds must be nonnegative")
        if self.min is not None and self.max is not None and self.min > self.max:
            raise ValueError("length min must not exceed max")

    def admits(self, count: int) -> bool:
        if self.min is not None and count < self.min:
            return False
        if self.max is not None and count > self.max:
            return False
        return True

    def render(self) -> str:
        parts = []
        if self.min is not None:
            parts.append(f"min {self.min} {self.unit.value}")
        if self.max is not None:
            parts.append(f"max {self.max} {self.unit.value}")
        return ", ".join(parts)


@dataclass(frozen=True)
class SentimentSpec:
    """Required polarity plus an optional free-text tone refinement."""

    polarity: Polarity
    tone: Optional[str] = None

    def __post_init__(self):
        if self.tone is not None:
            object.__setattr__(self, "tone", _clean_line(self.tone, "sentiment tone"))

    def render(self) -> str:
        if self.tone is None:
            return self.polarity.value
        return f"{self.polarity.value} ({self.tone})"


def _normalize_items(items, what: str) -> tuple[str, ...]:
    cleaned: list[str] = []
    seen: set[str] = set()
    for item in items:
        if not isinstance(item, str) or not item.strip():
            raise ValueError(f"{what} entries must be non-empty strings")
        if "\n" in item or "\r" in item:
            raise ValueError(f"{what} entries must not span lines")
        key = item.lower()
        if key in seen:
            continue
        seen.add(key)
        cleaned.append(item)
    return tuple(cleaned)


@dataclass(frozen=True)
class ConstraintSpec:
    """One value per constrained dimension; unset dimensions are ``None``."""

    view: Optional[str] = None
    sentiment: Optional[SentimentSpec] = None
    focus_content: Optional[tuple[str, ...]] = None
    keywords: Optional[tuple[str, ...]] = None
    length: Optional[LengthConstraint] = None
    format: Optional[CaptionFormat] = None
    genre: Optional[str] = None

    def __post_init__(self):
        if self.view is not None:
            object.__setattr__(self, "view", _clean_line(self.view, "view"))
        if self.genre is not None:
            object.__setattr__(self, "genre", _clean_line(self.genre, "genre"))
        if self.focus_content is not None:
            object.__setattr__(
                self, "focus_content", _normalize_items(self.focus_content, "focus_content")
            )
        if self.keywords is not None:
            object.__setattr__(self, "keywords", _normalize_items(self.keywords, "keywords"))

    def dimensions(self) -> tuple[str, ...]:
        """Names of the set dimensions, in canonical order."""
        return tuple(d for d in DIMENSIONS if getattr(self, d) is not None)

    @property
    def is_empty(self) -> bool:
        return not self.dimensions()


# --- block rendering ----------------------------------------------------------

BLOCK_OPEN = "---constraints"
BLOCK_CLOSE = "---"


def _quote_item(item: str) -> str:
    return '"' + item.replace("\\", "\\\\").replace('"', '\\"') + '"'


def render_constraint_block(spec: ConstraintSpec) -> str:
    """Canonical fenced block for ``spec`` (keys in canonical order)."""
    if spec.is_empty:
        raise ValueError("cannot render an empty constraint spec")
    lines = [BLOCK_OPEN]
    if spec.view is not None:
        lines.append(f"view: {spec.view}")
    if spec.sentiment is not None:
        lines.append(f"sentiment: {spec.sentiment.render()}")
    if spec.focus_content is not None:
        lines.append("focus_content: " + ", ".join(_quote_item(i) for i in spec.focus_content))
    if spec.keywords is not None:
        lines.append("keywords: " + ", ".join(_quote_item(i) for i in spec.keywords))
    if spec.length is not None:
        lines.append(f"length: {spec.length.render()}")
    if spec.format is not None:
        lines.append(f"format: {spec.format.value}")
    if spec.genre is not None:
        lines.append(f"genre: {spec.genre}")
    lines.append(BLOCK_CLOSE)
    return "\n".join(lines)


# --- block parsing ------------------------------------------------------------

_SENTIMENT_RE = re.compile(r"^(positive|negative|neutral)(?:\s+\((.+)\))?$", re.DOTALL)
_LENGTH_CLAUSE_RE = re.compile(r"^(min|max)\s+(\d+)\s+(words|sentences)$")


def _parse_quoted_list(value: str, line_no: int, col0: int, key: str) -> tuple[str, ...]:
    items: list[str] = []
    i = 0
    n = len(value)
    while True:
        while i < n and value[i] in " \t":
            i += 1
        if i >= n:
            raise MalformedBlock(f"{key} expects a quoted item", line_no, col0 + i)
        if value[i] != '"':
            raise MalformedBlock(f"{key} items must be double-quoted", line_no, col0 + i)
        i += 1
        buf: list[str] = []
        while True:
            if i >= n:
                raise MalformedBlock(f"unterminated item in {key}", line_no, col0 + i)
            ch = value[i]
            if ch == '"':
                i += 1
                break
            if ch == "\\":
                if i + 1 >= n or value[i + 1] not in ('"', "\\"):
                    raise MalformedBlock(f"bad escape in {key}", line_no, col0 + i)
                buf.append(value[i + 1])
                i += 2
            else:
                buf.append(ch)
                i += 1
        item = "".join(buf)
        if not item.strip():
            raise MalformedBlock(f"empty item in {key}", line_no, col0 + i)
        items.append(item)
        while i < n and value[i] in " \t":
            i += 1
        if i >= n:
            return tuple(items)
        if value[i] != ",":
            raise MalformedBlock(f"expected ',' between {key} items", line_no, col0 + i)
        i += 1


def _parse_length(value: str, line_no: int, col0: int) -> LengthConstraint:
    unit: Optional[str] = None
    bounds: dict[str, int] = {}
    for raw_clause in value.split(","):
        clause = raw_clause.strip()
        m = _LENGTH_CLAUSE_RE.match(clause)
        if not m:
            raise MalformedBlock(f"bad length clause {clause!r}", line_no, col0)
        kind, number, clause_unit = m.group(1), int(m.group(2)), m.group(3)
        if kind in bounds:
            raise MalformedBlock(f"length repeats the {kind} bound", line_no, col0)
        if unit is not None and clause_unit != unit:
            raise MalformedBlock("length clauses mix words and sentences", line_no, col0)
        unit = clause_unit
        bounds[kind] = number
    if unit is None:
        raise MalformedBlock("length value is empty", line_no, col0)
    if bounds.get("min") is not None and bounds.get("max") is not None:
        if bounds["min"] > bounds["max"]:
            raise MalformedBlock("length min exceeds max", line_no, col0)
    return LengthConstraint(unit=LengthUnit(unit), min=bounds.get("min"), max=bounds.get("max"))


def extract_constraint_block(evolved_text: str) -> ConstraintSpec:
    """Parse the single fenced constraint block embedded in ``evolved_text``.

    Raises MissingBlock when no block is present, DuplicateKey when a key
    repeats, and MalformedBlock (with 1-based line/column) for everything
    else, including a second block.
    """
    lines = evolved_text.split("\n")
    open_idx = None
    close_idx = None
    for idx, line in enumerate(lines):
        stripped = line.strip()
        if open_idx is None:
            if stripped == BLOCK_OPEN:
                open_idx = idx
        elif close_idx is None:
            if stripped == BLOCK_CLOSE:
                close_idx = idx
        elif stripped == BLOCK_OPEN:
            raise MalformedBlock("more than one constraint block", idx + 1, 1)
    if open_idx is None:
        raise MissingBlock("no constraint block found")
    if close_idx is None:
        raise MalformedBlock("constraint block is never closed", open_idx + 1, 1)

    values: dict[str, object] = {}
    for idx in range(open_idx + 1, close_idx):
        line = lines[idx]
        line_no = idx + 1
        if not line.strip():
            continue
        key, sep, value = line.partition(":")
        key = key.strip()
        if not sep or key not in DIMENSIONS:
            raise MalformedBlock(f"unknown constraint key {key!r}", line_no, 1)
        if key in values:
            raise DuplicateKey(f"duplicate constraint key {key!r}", line_no, 1)
        col0 = line.index(":") + 2  # 1-based column of the value text
        value = value.strip()
        if not value:
            raise MalformedBlock(f"{key} has no value", line_no, col0)
        try:
            if key in ("view", "genre"):
                values[key] = value
            elif key == "sentiment":
                m = _SENTIMENT_RE.match(value)
                if not m:
                    raise MalformedBlock(
                        "sentiment must be positive|negative|neutral with optional (tone)",
                        line_no,
                        col0,
                    )
                tone = m.group(2).strip() if m.group(2) else None
                values[key] = SentimentSpec(Polarity(m.group(1)), tone)
            elif key in ("focus_content", "keywords"):
                values[key] = _parse_quoted_list(value, line_no, col0, key)
            elif key == "length":
                values[key] = _parse_length(value, line_no, col0)
            elif key == "format":
                try:
                    values[key] = CaptionFormat(value)
                except ValueError:
                    raise MalformedBlock(
                        "format must be plain, bullets, or numbered", line_no, col0
                    ) from None
        except ValueError as exc:  # invariant violations surfaced by constructors
            raise MalformedBlock(str(exc), line_no, col0) from exc
    if not values:
        raise MalformedBlock("constraint block sets no dimension", open_idx + 1, 1)
    return ConstraintSpec(**values)  # type: ignore[arg-type]


# --- verification -------------------------------------------------------------


@dataclass(frozen=True)
class DimensionResult:
    dimension: str
    verdict: Verdict
    detail: str


@dataclass(frozen=True)
class VerificationReport:
    """Per-dimension verdicts for one caption against one spec."""

    results: tuple[DimensionResult, ...] = field(default_factory=tuple)

    def __post_init__(self):
        names = [r.dimension for r in self.results]
        if len(names) != len(set(names)):
            raise ValueError("a dimension appears more than once in the report")

    @property
    def overall(self) -> bool:
        return not any(r.verdict in (Verdict.FAIL, Verdict.JUDGED_FAIL) for r in self.results)

    @property
    def incomplete(self) -> bool:
        return any(r.verdict is Verdict.NEEDS_JUDGE for r in self.results)

    def result_for(self, dimension: str) -> DimensionResult:
        for r in self.results:
            if r.dimension == dimension:
                return r
        raise KeyError(dimension)

    def render(self) -> str:
        lines = [f"{r.dimension}: {r.verdict.value} ({r.detail})" for r in self.results]
        lines.append(f"overall: {'pass' if self.overall else 'fail'}")
        return "\n".join(lines)


_BULLET_PREFIXES = ("- ", "\u2022 ")
_NUMBERED_RE = re.compile(r"^\d+\. ")


def _check_format(text: str, fmt: CaptionFormat) -> tuple[bool, str]:
    lines = [line for line in text.split("\n") if line.strip()]
    if fmt is CaptionFormat.BULLETS:
        bad = [line for line in lines if not line.startswith(_BULLET_PREFIXES)]
        return (not bad, f"{len(lines) - len(bad)}/{len(lines)} lines are bullets")
    if fmt is CaptionFormat.NUMBERED:
        bad = [line for line in lines if not _NUMBERED_RE.match(line)]
        return (not bad, f"{len(lines) - len(bad)}/{len(lines)} lines are numbered")
    marked = [
        line for line in lines if line.startswith(_BULLET_PREFIXES) or _NUMBERED_RE.match(line)
    ]
    return (not marked, f"{len(marked)} list-marked lines in plain text")


def verify_deterministic(caption: "Caption", spec: ConstraintSpec) -> VerificationReport:
    """Decide length/keywords/format locally; mark the rest needs_judge."""
    results: list[DimensionResult] = []
    text = caption.text
    for dim in spec.dimensions():
        if dim == "length":
            lc = spec.length
            count = word_count(text) if lc.unit is LengthUnit.WORDS else sentence_count(text)
            verdict = Verdict.PASS if lc.admits(count) else Verdict.FAIL
            results.append(DimensionResult(dim, verdict, f"counted {count} {lc.unit.value}; need {lc.render()}"))
        elif dim == "keywords":
            lowered = text.lower()
            missing = [k for k in spec.keywords if k.lower() not in lowered]
            if missing:
                detail = "missing: " + ", ".join(repr(k) for k in missing)
                results.append(DimensionResult(dim, Verdict.FAIL, detail))
            else:
                results.append(DimensionResult(dim, Verdict.PASS, "all keywords present"))
        elif dim == "format":
            ok, detail = _check_format(text, spec.format)
            results.append(DimensionResult(dim, Verdict.PASS if ok else Verdict.FAIL, detail))
        else:
            results.append(DimensionResult(dim, Verdict.NEEDS_JUDGE, "requires a judge backend"))
    return VerificationReport(tuple(results))


_JUDGE_SYSTEM = (
    "You check whether a caption satisfies one requirement. "
    "Reply with PASS or FAIL followed by a one-line reason, e.g. 'FAIL: tone is neutral'."
)

_JUDGE_REQUIREMENTS = {
    "view": "The caption must describe the scene from this view: {value}.",
    "sentiment": "The caption's emotional tone must be: {value}.",
    "focus_content": "The caption must include these salient details: {value}.",
    "genre": "The caption must read as this genre: {value}.",
}


def _judge_value(spec: ConstraintSpec, dim: str) -> str:
    value = getattr(spec, dim)
    if dim == "sentiment":
        return value.render()
    if dim == "focus_content":
        return "; ".join(value)
    return value


def parse_judge_reply(reply: str) -> tuple[bool, str]:
    """Split a PASS/FAIL-prefixed judge reply into (passed, rationale)."""
    stripped = reply.strip()
    upper = stripped.upper()
    for prefix, passed in (("PASS", True), ("FAIL", False)):
        if upper.startswith(prefix):
            rest = stripped[len(prefix):].lstrip(" :").strip()
            return passed, (rest.splitlines()[0] if rest else prefix)
    raise MalformedBackendOutput(f"judge reply must start with PASS or FAIL, got {stripped!r}")


def verify_judged(
    caption: "Caption", spec: ConstraintSpec, judge: "ChatBackend"
) -> VerificationReport:
    """Fill every needs_judge dimension with a judged verdict.

    One judge call per judged dimension, issued sequentially in report order
    so cassette replays line up. A backend failure leaves that dimension at
    needs_judge with the error recorded, so the report stays usable but
    reports ``incomplete``.
    """
    from .backends.base import ChatMessage  # runtime import to avoid a cycle

    base = verify_deterministic(caption, spec)
    results: list[DimensionResult] = []
    for res in base.results:
        if res.verdict is not Verdict.NEEDS_JUDGE:
            results.append(res)
            continue
        requirement = _JUDGE_REQUIREMENTS[res.dimension].format(
            value=_judge_value(spec, res.dimension)
        )
        prompt = f"{requirement}\n\nCaption:\n{caption.text}\n\nDoes the caption satisfy the requirement?"
        try:
            reply = judge.chat(
                (ChatMessage("system", _JUDGE_SYSTEM), ChatMessage("user", prompt))
            )
            passed, rationale = parse_judge_reply(reply)
        except BackendError as exc:
            results.append(
                DimensionResult(res.dimension, Verdict.NEEDS_JUDGE, f"judge unavailable: {exc}")
            )
            continue
        verdict = Verdict.JUDGED_PASS if passed else Verdict.JUDGED_FAIL
        results.append(DimensionResult(res.dimension, verdict, rationale))
    return VerificationReport(tuple(results))


# --- inheritance --------------------------------------------------------------


@dataclass(frozen=True)
class InheritanceResult:
    ok: bool
    violations: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


def _covers_list(user: tuple[str, ...], evolved: Optional[tuple[str, ...]]) -> bool:
    if evolved is None:
        return False
    have = {item.lower() for item in evolved}
    return all(item.lower() in have for item in user)


def _covers_length(user: LengthConstraint, evolved: Optional[LengthConstraint]) -> bool:
    if evolved is None or evolved.unit is not user.unit:
        return False
    if user.min is not None and (evolved.min is None or evolved.min < user.min):
        return False
    if user.max is not None and (evolved.max is None or evolved.max > user.max):
        return False
    return True


def _covers_sentiment(user: SentimentSpec, evolved: Optional[SentimentSpec]) -> bool:
    if evolved is None or evolved.polarity is not user.polarity:
        return False
    return user.tone is None or evolved.tone == user.tone


def check_inheritance(user_spec: ConstraintSpec, evolved_spec: ConstraintSpec) -> InheritanceResult:
    """True iff every user-set dimension survives with equal or tighter value.

    Length intervals may only shrink, item lists may only grow, and all other
    dimensions must match exactly. The relation is reflexive and transitive.
    """
    violations: list[str] = []
    for dim in user_spec.dimensions():
        user_value = getattr(user_spec, dim)
        evolved_value = getattr(evolved_spec, dim)
        if dim in ("keywords", "focus_content"):
            ok = _covers_list(user_value, evolved_value)
        elif dim == "length":
            ok = _covers_length(user_value, evolved_value)
        elif dim == "sentiment":
            ok = _covers_sentiment(user_value, evolved_value)
        else:
            ok = evolved_value == user_value
        if not ok:
            violations.append(dim)
    return InheritanceResult(not violations, tuple(violations))
