"""Shared generators for constraint specs and loosened variants."""

from __future__ import annotations

import random
from typing import Optional

from captionsmith.constraints import (
    CaptionFormat,
    ConstraintSpec,
    LengthConstraint,
    LengthUnit,
    Polarity,
    SentimentSpec,
)

WORDS = ["harbor", "lantern", "cobalt", "drift", "meadow", "spire", "ember", "tide"]


def random_spec(rng: random.Random) -> ConstraintSpec:
    """A random spec with at least one dimension set."""
    while True:
        view = rng.choice([None, "from above", "from the entrance", "close up"])
        sentiment = None
        if rng.random() < 0.5:
            sentiment = SentimentSpec(
                rng.choice(list(Polarity)),
                rng.choice([None, "wistful", "triumphant"]),
            )
        focus = None
        if rng.random() < 0.5:
            focus = tuple(rng.sample(WORDS, rng.randint(1, 3)))
        keywords = None
        if rng.random() < 0.5:
            keywords = tuple(rng.sample(WORDS, rng.randint(1, 4)))
        length = None
        if rng.random() < 0.6:
            unit = rng.choice(list(LengthUnit))
            low = rng.randint(0, 40)
            high = low + rng.randint(0, 60)
            kind = rng.randint(0, 2)
            length = LengthConstraint(
                unit=unit,
                min=low if kind != 1 else None,
                max=high if kind != 0 else None,
            )
        fmt = rng.choice([None, *CaptionFormat])
        genre = rng.choice([None, "poetry", "travel blog", "news brief"])
        spec = ConstraintSpec(
            view=view,
            sentiment=sentiment,
            focus_content=focus,
            keywords=keywords,
            length=length,
            format=fmt,
            genre=genre,
        )
        if not spec.is_empty:
            return spec


def loosen(rng: random.Random, spec: ConstraintSpec) -> ConstraintSpec:
    """A spec that ``spec`` legally inherits from (equal or looser per field)."""
    view = spec.view if spec.view is not None and rng.random() < 0.6 else None
    sentiment: Optional[SentimentSpec] = None
    if spec.sentiment is not None and rng.random() < 0.6:
        tone = spec.sentiment.tone if rng.random() < 0.5 else None
        sentiment = SentimentSpec(spec.sentiment.polarity, tone)
    focus = None
    if spec.focus_content and rng.random() < 0.6:
        keep = rng.randint(1, len(spec.focus_content))
        focus = spec.focus_content[:keep]
    keywords = None
    if spec.keywords and rng.random() < 0.6:
        keep = rng.randint(1, len(spec.keywords))
        keywords = spec.keywords[:keep]
    length = None
    if spec.length is not None and rng.random() < 0.7:
        lo = spec.length.min
        hi = spec.length.max
        if lo is not None:
            lo = max(0, lo - rng.randint(0, 10)) if rng.random() < 0.7 else None
        if hi is not None:
            hi = hi + rng.randint(0, 10) if rng.random() < 0.7 else None
        if lo is not None or hi is not None:
            length = LengthConstraint(unit=spec.length.unit, min=lo, max=hi)
    fmt = spec.format if spec.format is not None and rng.random() < 0.6 else None
    genre = spec.genre if spec.genre is not None and rng.random() < 0.6 else None
    return ConstraintSpec(
        view=view,
        sentiment=sentiment,
        focus_content=focus,
        keywords=keywords,
        length=length,
        format=fmt,
        genre=genre,
    )
