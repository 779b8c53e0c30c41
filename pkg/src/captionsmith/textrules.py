"""Canonical text-measurement rules.

Every length check in the package counts through these two functions, so a
caption judged "38 words" by the verifier is 38 words everywhere else too.
Words are maximal whitespace-separated tokens; punctuation stays attached.
Sentences end at '.', '!' or '?' followed by whitespace or end of text; a
trailing unterminated fragment counts as one sentence.
"""

from __future__ import annotations

_TERMINATORS = frozenset(".!?")


def word_count(text: str) -> int:
    """Number of whitespace-separated tokens after trimming."""
    return len(text.split())


def sentence_count(text: str) -> int:
    """Number of terminated segments, plus a trailing unterminated one.

    A segment only counts when it contains at least one character that is
    neither whitespace nor a terminator, so "..." is zero sentences.
    """
    count = 0
    has_content = False
    n = len(text)
    for i, ch in enumerate(text):
        if ch in _TERMINATORS:
            at_boundary = i + 1 == n or text[i + 1].isspace()
            if at_boundary and has_content:
                count += 1
                has_content = False
        elif not ch.isspace():
            has_content = True
    if has_content:
        count += 1
    return count
