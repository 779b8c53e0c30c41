"""Turning a simple caption request into a professional instruction.

The evolver backend receives the user's request verbatim, the image, and the
web context summary (when there is one), and must answer with prose ending in
a machine-readable constraint block. Afterwards the result is validated on
four criteria; three are judged by a chat backend, constraint inheritance is
computed exactly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources

from .backends.base import ChatBackend, ChatMessage
from .constraints import (
    ConstraintSpec,
    InheritanceResult,
    LengthConstraint,
    LengthUnit,
    Polarity,
    SentimentSpec,
    Verdict,
    check_inheritance,
    parse_judge_reply,
)
from .context import ContextBundle
from .errors import BackendError, MalformedBlock, MissingBlock, EvolveFailed
from .model import EvolvedInstruction, Instruction

EVOLVE_RETRIES_DEFAULT = 2


def _load_asset(name: str) -> str:
    return resources.files("captionsmith").joinpath(f"assets/{name}").read_text(encoding="utf-8")


def build_evolver_messages(
    instruction: Instruction, context: ContextBundle
) -> tuple[ChatMessage, ...]:
    """The exact messages ``evolve`` sends; exposed so callers can audit them.

    The user text appears verbatim; an empty context bundle contributes no
    context section at all.
    """
    system = _load_asset("evolve_prompt.txt")
    parts = []
    if not context.is_empty and context.summary:
        parts.append(f"Context notes from a web lookup of similar images:\n{context.summary}\n")
    parts.append(f"User request: {instruction.text}")
    return (
        ChatMessage("system", system),
        ChatMessage("user", "\n".join(parts), image=instruction.image),
    )


_RETRY_NOTE = (
    "Your reply did not end with a valid constraint block ({problem}). "
    "Resend the full instruction, ending with exactly one well-formed block."
)


def evolve(
    instruction: Instruction,
    context: ContextBundle,
    backend: ChatBackend,
    retries: int = EVOLVE_RETRIES_DEFAULT,
) -> EvolvedInstruction:
    """Produce the professional instruction, retrying malformed blocks.

    After ``retries`` additional attempts the raw backend text is surfaced in
    EvolveFailed rather than silently passed downstream.
    """
    messages = list(build_evolver_messages(instruction, context))
    reply = ""
    for _ in range(retries + 1):
        reply = backend.chat(tuple(messages))
        try:
            return EvolvedInstruction.from_text(reply, backend.provenance)
        except (MissingBlock, MalformedBlock, ValueError) as exc:
            messages.append(ChatMessage("assistant", reply))
            messages.append(ChatMessage("user", _RETRY_NOTE.format(problem=exc)))
    raise EvolveFailed(f"no valid constraint block after {retries + 1} attempts", raw_text=reply)


# --- deterministic extraction of the user's explicit constraints ---------------

_MAX_RE = re.compile(
    r"\b(?:within|at most|no more than|under|up to|maximum of)\s+(\d+)\s+(words?|sentences?)\b",
    re.IGNORECASE,
)
_MIN_RE = re.compile(
    r"\b(?:at least|minimum of|no fewer than)\s+(\d+)\s+(words?|sentences?)\b", re.IGNORECASE
)
_EXACT_RE = re.compile(r"\b(?:exactly|in|using)\s+(\d+)\s+(words?|sentences?)\b", re.IGNORECASE)
_QUOTED_RE = re.compile("\"([^\"\\n]+)\"|\u201c([^\u201d\\n]+)\u201d")
_SENTIMENT_RE = re.compile(r"\b(positive|negative|neutral)\b", re.IGNORECASE)


def _unit_of(word: str) -> LengthUnit:
    return LengthUnit.WORDS if word.lower().startswith("word") else LengthUnit.SENTENCES


def extract_user_spec(text: str) -> ConstraintSpec:
    """Pattern-match the constraints a user stated in plain prose.

    Deliberately narrow: explicit word/sentence counts, double-quoted
    keyword phrases, and bare polarity words. Anything else is left for the
    evolver rather than guessed.
    """
    length = None
    max_m = _MAX_RE.search(text)
    min_m = _MIN_RE.search(text)
    if max_m or min_m:
        unit = _unit_of((max_m or min_m).group(2))
        min_v = int(min_m.group(1)) if min_m and _unit_of(min_m.group(2)) is unit else None
        max_v = int(max_m.group(1)) if max_m and _unit_of(max_m.group(2)) is unit else None
        if min_v is not None and max_v is not None and min_v > max_v:
            min_v = None
        length = LengthConstraint(unit=unit, min=min_v, max=max_v)
    else:
        exact_m = _EXACT_RE.search(text)
        if exact_m:
            n = int(exact_m.group(1))
            length = LengthConstraint(unit=_unit_of(exact_m.group(2)), min=n, max=n)

    keywords = tuple(
        (a or b).strip() for a, b in _QUOTED_RE.findall(text) if (a or b).strip()
    )
    sentiment_m = _SENTIMENT_RE.search(text)

    return ConstraintSpec(
        sentiment=SentimentSpec(Polarity(sentiment_m.group(1).lower())) if sentiment_m else None,
        keywords=keywords or None,
        length=length,
    )


# --- evolving criteria ----------------------------------------------------------


@dataclass(frozen=True)
class CriterionResult:
    name: str
    verdict: Verdict
    detail: str


@dataclass(frozen=True)
class CriteriaReport:
    """Verdicts on the four qualities an evolved instruction must have."""

    correctness: CriterionResult
    content_specificity: CriterionResult
    consistency: CriterionResult
    constraint_inheritance: InheritanceResult

    @property
    def all_pass(self) -> bool:
        judged_ok = all(
            r.verdict is Verdict.JUDGED_PASS
            for r in (self.correctness, self.content_specificity, self.consistency)
        )
        return judged_ok and self.constraint_inheritance.ok

    def render(self) -> str:
        lines = [
            f"{r.name}: {r.verdict.value} ({r.detail})"
            for r in (self.correctness, self.content_specificity, self.consistency)
        ]
        inh = self.constraint_inheritance
        detail = "preserved" if inh.ok else "loosened: " + ", ".join(inh.violations)
        lines.append(f"constraint_inheritance: {'pass' if inh.ok else 'fail'} ({detail})")
        return "\n".join(lines)


_CRITERIA_SYSTEM = (
    "You judge one quality of a rewritten image-caption instruction. "
    "Reply with PASS or FAIL followed by a one-line reason."
)

_CRITERIA_QUESTIONS = {
    "correctness": (
        "Quality: the rewritten instruction must be answerable by describing this image; "
        "it must not demand objects or facts the image cannot support."
    ),
    "content_specificity": (
        "Quality: the rewritten instruction must be tailored to this specific image's "
        "visible content rather than generic."
    ),
    "consistency": (
        "Quality: the rewritten instruction must be internally coherent, with no "
        "contradictory requirements."
    ),
}


def validate_evolution(
    user_instruction: Instruction,
    user_spec: ConstraintSpec,
    evolved: EvolvedInstruction,
    judge: ChatBackend,
) -> CriteriaReport:
    """Judge correctness/specificity/consistency; compute inheritance exactly.

    A judge failure leaves that criterion at needs_judge with the error in
    its detail; it never hides an inheritance violation.
    """
    judged: dict[str, CriterionResult] = {}
    for name in ("correctness", "content_specificity", "consistency"):
        prompt = (
            f"{_CRITERIA_QUESTIONS[name]}\n\n"
            f"Original request:\n{user_instruction.text}\n\n"
            f"Rewritten instruction:\n{evolved.text}\n\n"
            "Does the rewritten instruction have this quality?"
        )
        try:
            reply = judge.chat(
                (
                    ChatMessage("system", _CRITERIA_SYSTEM),
                    ChatMessage("user", prompt, image=user_instruction.image),
                )
            )
            passed, rationale = parse_judge_reply(reply)
            verdict = Verdict.JUDGED_PASS if passed else Verdict.JUDGED_FAIL
            judged[name] = CriterionResult(name, verdict, rationale)
        except BackendError as exc:
            judged[name] = CriterionResult(name, Verdict.NEEDS_JUDGE, f"judge unavailable: {exc}")

    return CriteriaReport(
        correctness=judged["correctness"],
        content_specificity=judged["content_specificity"],
        consistency=judged["consistency"],
        constraint_inheritance=check_inheritance(user_spec, evolved.spec),
    )
