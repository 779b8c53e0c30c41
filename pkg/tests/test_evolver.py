from __future__ import annotations

import pytest

from captionsmith.backends import Cassette, CassetteChat, CassetteMode, ScriptedChat
from captionsmith.backends.base import BackendRole
from captionsmith.constraints import (
    ConstraintSpec,
    LengthConstraint,
    LengthUnit,
    Polarity,
    SentimentSpec,
    Verdict,
)
from captionsmith.context import ContextBundle, SearchResult, WebImageHit
from captionsmith.errors import EvolveFailed
from captionsmith.evolver import (
    build_evolver_messages,
    evolve,
    extract_user_spec,
    validate_evolution,
)
from captionsmith.model import Instruction, Provenance

GOOD_REPLY = (
    "Describe the gold Tesla Cybercab robotaxi for a product page.\n"
    "\n"
    "---constraints\n"
    'keywords: "Tesla Cybercab"\n'
    "length: max 60 words\n"
    "---"
)


@pytest.fixture
def instruction(image):
    return Instruction(text='Caption this, mention "Tesla Cybercab".', image=image)


def cybercab_bundle() -> ContextBundle:
    return ContextBundle(
        image_hits=(WebImageHit(title="Tesla Cybercab reveal", source_url="u", rank=1),),
        queries=("tesla cybercab",),
        results=(SearchResult(query="tesla cybercab", snippets=("a robotaxi",)),),
        summary="The pictured car is the Tesla Cybercab robotaxi.",
    )


# --- prompt construction -----------------------------------------------------------


def test_user_instruction_appears_verbatim(instruction):
    messages = build_evolver_messages(instruction, ContextBundle.empty())
    joined = "\n".join(m.text for m in messages)
    assert instruction.text in joined


def test_empty_context_adds_no_context_section(instruction):
    messages = build_evolver_messages(instruction, ContextBundle.empty())
    joined = "\n".join(m.text for m in messages)
    assert "Context notes" not in joined


def test_context_summary_included_when_present(instruction):
    messages = build_evolver_messages(instruction, cybercab_bundle())
    joined = "\n".join(m.text for m in messages)
    assert "Context notes" in joined
    assert "Tesla Cybercab robotaxi" in joined


def test_prompt_names_all_seven_dimensions(instruction):
    joined = "\n".join(m.text for m in build_evolver_messages(instruction, ContextBundle.empty()))
    for dim in ("view", "sentiment", "focus_content", "keywords", "length", "format", "genre"):
        assert dim in joined


def test_image_rides_on_the_user_message(instruction):
    messages = build_evolver_messages(instruction, ContextBundle.empty())
    assert messages[-1].image is instruction.image


# --- evolve -------------------------------------------------------------------------


def test_evolve_success(instruction):
    backend = ScriptedChat([GOOD_REPLY])
    evolved = evolve(instruction, cybercab_bundle(), backend)
    assert evolved.spec.keywords == ("Tesla Cybercab",)
    assert evolved.provenance is Provenance.FIXTURE
    # the backend saw the instruction verbatim
    sent = "\n".join(m.text for m in backend.calls[0])
    assert instruction.text in sent


def test_evolve_retries_on_missing_block(instruction):
    backend = ScriptedChat(["just prose, no block", GOOD_REPLY])
    evolved = evolve(instruction, ContextBundle.empty(), backend)
    assert evolved.spec.length == LengthConstraint(LengthUnit.WORDS, max=60)
    assert len(backend.calls) == 2
    # the retry message points at the problem
    retry_prompt = "\n".join(m.text for m in backend.calls[1])
    assert "constraint block" in retry_prompt


def test_evolve_fails_after_retry_budget(instruction):
    backend = ScriptedChat(["bad one", "bad two", "bad three"])
    with pytest.raises(EvolveFailed) as excinfo:
        evolve(instruction, ContextBundle.empty(), backend, retries=2)
    assert excinfo.value.raw_text == "bad three"
    assert len(backend.calls) == 3


# --- user spec extraction -------------------------------------------------------------


@pytest.mark.parametrize(
    "text,expected",
    [
        ("describe it", ConstraintSpec()),
        (
            "within 80 words please",
            ConstraintSpec(length=LengthConstraint(LengthUnit.WORDS, max=80)),
        ),
        (
            "at least 3 sentences",
            ConstraintSpec(length=LengthConstraint(LengthUnit.SENTENCES, min=3)),
        ),
        (
            "at least 20 words but at most 40 words",
            ConstraintSpec(length=LengthConstraint(LengthUnit.WORDS, min=20, max=40)),
        ),
        (
            "in 2 sentences",
            ConstraintSpec(length=LengthConstraint(LengthUnit.SENTENCES, min=2, max=2)),
        ),
        (
            'mention "Venom 3" and "HD wallpapers"',
            ConstraintSpec(keywords=("Venom 3", "HD wallpapers")),
        ),
        (
            "keep it positive",
            ConstraintSpec(sentiment=SentimentSpec(Polarity.POSITIVE)),
        ),
        (
            'a positive caption with "harbor lights" in at most 15 words',
            ConstraintSpec(
                sentiment=SentimentSpec(Polarity.POSITIVE),
                keywords=("harbor lights",),
                length=LengthConstraint(LengthUnit.WORDS, max=15),
            ),
        ),
        ("make it positively glowing", ConstraintSpec()),  # word-boundary, not substring
    ],
)
def test_extract_user_spec(text, expected):
    assert extract_user_spec(text) == expected


def test_curly_quotes_also_count():
    spec = extract_user_spec("mention “Tesla Cybercab” somewhere")
    assert spec.keywords == ("Tesla Cybercab",)


# --- criteria -------------------------------------------------------------------------


def evolved_fixture(instruction):
    return evolve(instruction, ContextBundle.empty(), ScriptedChat([GOOD_REPLY]))


def test_all_judges_pass(instruction):
    evolved = evolved_fixture(instruction)
    judge = ScriptedChat(["PASS: a", "PASS: b", "PASS: c"])
    report = validate_evolution(
        instruction, extract_user_spec(instruction.text), evolved, judge
    )
    assert report.correctness.verdict is Verdict.JUDGED_PASS
    assert report.content_specificity.verdict is Verdict.JUDGED_PASS
    assert report.consistency.verdict is Verdict.JUDGED_PASS
    assert report.constraint_inheritance.ok
    assert report.all_pass


def test_inheritance_violation_is_surfaced(instruction):
    evolved = evolved_fixture(instruction)
    user_spec = ConstraintSpec(length=LengthConstraint(LengthUnit.WORDS, max=40))
    judge = ScriptedChat(["PASS: a", "PASS: b", "PASS: c"])
    report = validate_evolution(instruction, user_spec, evolved, judge)
    assert not report.constraint_inheritance.ok
    assert report.constraint_inheritance.violations == ("length",)
    assert not report.all_pass


def test_judge_outage_marks_criterion_incomplete(instruction):
    evolved = evolved_fixture(instruction)
    report = validate_evolution(
        instruction, ConstraintSpec(), evolved, ScriptedChat(["PASS: a"])
    )
    assert report.correctness.verdict is Verdict.JUDGED_PASS
    assert report.content_specificity.verdict is Verdict.NEEDS_JUDGE
    assert "unavailable" in report.content_specificity.detail


def test_criteria_replay_identical(instruction, tmp_path):
    evolved = evolved_fixture(instruction)
    cassette = Cassette(BackendRole.CHAT, CassetteMode.RECORD)
    judge = CassetteChat(cassette, ScriptedChat(["PASS: a", "FAIL: generic", "PASS: c"]))
    first = validate_evolution(instruction, ConstraintSpec(), evolved, judge)
    path = tmp_path / "judge.jsonl"
    cassette.save(path)
    second = validate_evolution(
        instruction, ConstraintSpec(), evolved, CassetteChat(Cassette.load(path))
    )
    assert first == second
    assert not first.all_pass
