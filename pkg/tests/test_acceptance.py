"""Acceptance suite: one test per criterion, one printed PASS/FAIL line each.

Everything here runs offline. Expected values come from independent oracles:
brute-force sorts, hand-applied counting rules, committed verdict triples, and
byte comparison of replayed runs.
"""

from __future__ import annotations

import json
import math
import random
import re
import time
from contextlib import contextmanager
import numpy as np
import pytest

from captionsmith import cli
from captionsmith.actions import FinalAnswer, Symbol, ToolCall, parse_action, serialize_action
from captionsmith.agent import AgentConfig, RunDeps, run
from captionsmith.backends import FixtureDepth, FixtureDetector, HashEmbedder, ScriptedChat
from captionsmith.constraints import (
    ConstraintSpec,
    LengthConstraint,
    LengthUnit,
    Polarity,
    SentimentSpec,
    check_inheritance,
    extract_constraint_block,
    verify_deterministic,
)
from captionsmith.errors import ParseError
from captionsmith.model import Caption, EvolvedInstruction, Provenance, TerminationReason
from captionsmith.retrieval import ChainExample, Vector, VectorStore, build_index, top_n
from captionsmith.textrules import sentence_count, word_count
from captionsmith.tools import (
    build_standard_registry,
    condense_caption,
    count_objects,
    expand_caption,
    spatial_relations,
)
from captionsmith.backends.base import BoundingBox

from conftest import FIXTURES
from helpers import loosen, random_spec
from test_actions import MALFORMED

SCENARIOS = sorted(p for p in (FIXTURES / "scenarios").iterdir() if p.is_dir())


@contextmanager
def criterion(number: int, name: str):
    try:
        yield
    except BaseException:
        print(f"criterion {number} ({name}): FAIL")
        raise
    print(f"criterion {number} ({name}): PASS")


# --- 1: similarity and selection against the brute-force oracle -----------------------


def direct_cosine(a: tuple[float, ...], b: tuple[float, ...]) -> float:
    dot = sum(x * y for x, y in zip(a, b))
    return dot / (math.sqrt(sum(x * x for x in a)) * math.sqrt(sum(x * x for x in b)))


def test_criterion_1_selection_matches_oracle():
    with criterion(1, "top-n equals brute-force oracle"):
        started = time.perf_counter()
        rng = np.random.RandomState(20240917)
        size_rng = random.Random(20240917)
        for _ in range(200):
            t = size_rng.randint(1, 1000)
            matrix = rng.uniform(-1.0, 1.0, size=(t, 16))
            entries = tuple((f"e{i}", Vector(tuple(row))) for i, row in enumerate(matrix))
            store = VectorStore(dim=16, embedder_id="bench", entries=entries)
            query = Vector(tuple(rng.uniform(-1.0, 1.0, size=16)))

            oracle = sorted(
                ((eid, direct_cosine(query.components, vec.components)) for eid, vec in entries),
                key=lambda pair: -pair[1],
            )
            for n in (1, 4, t, t + 5):
                got = top_n(query, store, n)
                want = oracle[: min(n, t)]
                assert [eid for eid, _ in got] == [eid for eid, _ in want]
                for (_, g), (_, w) in zip(got, want):
                    assert abs(g - w) <= 1e-9
        elapsed = time.perf_counter() - started
        assert elapsed < 5.0, f"took {elapsed:.2f}s"


# --- 2: action grammar round trip -------------------------------------------------------


def random_action(rng: random.Random):
    def ident():
        first = rng.choice("abcdefghijklmnopqrstuvwxyz_")
        rest = "".join(rng.choices("abcdefghijklmnopqrstuvwxyz0123456789_", k=rng.randint(0, 9)))
        return first + rest

    def text():
        alphabet = 'abc XYZ 09 _-.,;"\\\n\té中'
        return "".join(rng.choices(alphabet, k=rng.randint(0, 25)))

    if rng.random() < 0.3:
        caption = text()
        return FinalAnswer(caption or "x")
    names = []
    while len(names) < rng.randint(0, 4):
        name = ident()
        if name not in names:
            names.append(name)
    args = []
    for name in names:
        kind = rng.random()
        if kind < 0.4:
            args.append((name, text()))
        elif kind < 0.7:
            args.append((name, rng.randint(-(10**9), 10**9)))
        else:
            args.append((name, Symbol(ident())))
    return ToolCall(ident(), tuple(args))


def test_criterion_2_round_trip_and_malformed():
    with criterion(2, "action round trip + positioned parse errors"):
        started = time.perf_counter()
        rng = random.Random(42)
        for _ in range(1000):
            action = random_action(rng)
            assert parse_action(serialize_action(action)) == action
        assert len(MALFORMED) >= 50
        for bad in MALFORMED[:50]:
            with pytest.raises(ParseError) as excinfo:
                parse_action(bad)
            assert 0 <= excinfo.value.position <= len(bad)
        elapsed = time.perf_counter() - started
        assert elapsed < 2.0, f"took {elapsed:.2f}s"


# --- 3: committed verdict triples ---------------------------------------------------------


def test_criterion_3_constraint_oracle_suite():
    with criterion(3, "50 committed verification triples"):
        cases = json.loads((FIXTURES / "constraint_cases.json").read_text(encoding="utf-8"))
        assert len(cases) == 50
        failures = []
        for case in cases:
            spec = extract_constraint_block(case["block"])
            report = verify_deterministic(Caption(case["caption"]), spec)
            for dimension, expected in case["expected"].items():
                got = report.result_for(dimension).verdict.value
                if got != expected:
                    failures.append(f"{case['name']}.{dimension}: got {got}, want {expected}")
        assert not failures, "; ".join(failures)


# --- 4: inheritance algebra ------------------------------------------------------------------


def test_criterion_4_inheritance_algebra():
    with criterion(4, "inheritance reflexive/transitive + loosening diffs"):
        rng = random.Random(99)
        for _ in range(500):
            tight = random_spec(rng)
            mid = loosen(rng, tight)
            loose = loosen(rng, mid)
            for spec in (tight, mid, loose):
                assert check_inheritance(spec, spec).ok  # reflexive
            assert check_inheritance(mid, tight).ok
            assert check_inheritance(loose, mid).ok
            assert check_inheritance(loose, tight).ok  # transitive along the chain

        def diff(user, evolved):
            return check_inheritance(user, evolved).violations

        w = LengthUnit.WORDS
        loosenings = [
            (
                ConstraintSpec(length=LengthConstraint(w, max=80)),
                ConstraintSpec(length=LengthConstraint(w, max=100)),
                ("length",),
            ),
            (
                ConstraintSpec(length=LengthConstraint(w, min=10)),
                ConstraintSpec(length=LengthConstraint(w, min=5)),
                ("length",),
            ),
            (
                ConstraintSpec(length=LengthConstraint(w, max=10)),
                ConstraintSpec(length=LengthConstraint(LengthUnit.SENTENCES, max=10)),
                ("length",),
            ),
            (
                ConstraintSpec(keywords=("Tesla", "Cybercab")),
                ConstraintSpec(keywords=("Tesla",)),
                ("keywords",),
            ),
            (
                ConstraintSpec(focus_content=("doors", "cabin")),
                ConstraintSpec(focus_content=("doors",)),
                ("focus_content",),
            ),
            (
                ConstraintSpec(sentiment=SentimentSpec(Polarity.POSITIVE)),
                ConstraintSpec(sentiment=SentimentSpec(Polarity.NEUTRAL)),
                ("sentiment",),
            ),
            (
                ConstraintSpec(sentiment=SentimentSpec(Polarity.POSITIVE, "wistful")),
                ConstraintSpec(sentiment=SentimentSpec(Polarity.POSITIVE)),
                ("sentiment",),
            ),
            (
                ConstraintSpec(view="from above"),
                ConstraintSpec(view="close up"),
                ("view",),
            ),
            (
                ConstraintSpec(genre="poetry"),
                ConstraintSpec(keywords=("x",)),
                ("genre",),
            ),
            (
                ConstraintSpec(
                    format=None, keywords=("a",), length=LengthConstraint(w, max=5)
                ),
                ConstraintSpec(keywords=("b",), length=LengthConstraint(w, max=9)),
                ("keywords", "length"),
            ),
        ]
        for user, evolved, expected in loosenings:
            assert diff(user, evolved) == expected


# --- 5: end-to-end replay determinism ---------------------------------------------------------


def test_criterion_5_scenario_replays_are_byte_identical(tmp_path):
    with criterion(5, "scenario replays byte-identical + verified captions"):
        assert len(SCENARIOS) >= 5
        assert any(s.name == "cybercab_context" for s in SCENARIOS)
        for scenario in SCENARIOS:
            contents = []
            for i in (1, 2):
                out = tmp_path / f"{scenario.name}.{i}.jsonl"
                code = cli.main(
                    ["replay", "--scenario", str(scenario), "--trace-out", str(out)]
                )
                assert code == 0, f"{scenario.name} replay exited {code}"
                contents.append(out.read_bytes())
            assert contents[0] == contents[1], f"{scenario.name} replays differ"

            lines = contents[0].decode("utf-8").splitlines()
            header, footer = json.loads(lines[0]), json.loads(lines[-1])
            caption_file = tmp_path / f"{scenario.name}.caption.txt"
            spec_file = tmp_path / f"{scenario.name}.spec.txt"
            caption_file.write_text(footer["final_caption"], encoding="utf-8")
            spec_file.write_text(header["spec"], encoding="utf-8")
            code = cli.main(
                ["verify", "--caption-file", str(caption_file), "--spec-file", str(spec_file)]
            )
            assert code == 0, f"{scenario.name} caption failed verification"


# --- 6: loop budget and repair ------------------------------------------------------------------


EVOLVED = EvolvedInstruction.from_text(
    'Mention the phrase.\n---constraints\nkeywords: "harbor lights"\n---',
    Provenance.FIXTURE,
)


def loop_deps(planner_entries, max_steps=8) -> RunDeps:
    examples = [
        ChainExample(id=f"e{i}", instruction=f"i{i}", steps=(("t", 'call vqa(question="q")', "o"),))
        for i in range(4)
    ]
    embedder = HashEmbedder(16)
    return RunDeps(
        planner=ScriptedChat(planner_entries, name="planner"),
        registry=build_standard_registry(),
        tool_chat=ScriptedChat([], name="toolchat"),
        detector=FixtureDetector([]),
        depth=FixtureDepth(np.ones((4, 4))),
        embedder=embedder,
        store=build_index(examples, embedder),
        examples={ex.id: ex for ex in examples},
        config=AgentConfig(max_steps=max_steps, n_examples=2),
    )


def test_criterion_6_budget_and_repair(image):
    with criterion(6, "rejected finish repairs within two steps; budget exact"):
        deps = loop_deps(
            [
                'Thought: one sentence\nAction: finish(caption="Boats sway at dusk.")',
                (
                    "Thought: the check wants the phrase\n"
                    'Action: finish(caption="Boats sway beneath the harbor lights.")'
                ),
            ]
        )
        trace = run(EVOLVED, image, deps)
        assert trace.terminated_reason is TerminationReason.FINAL_ANSWER
        assert len(trace.steps) == 2  # repaired on the very next step (within 2)
        assert trace.steps[0].observation.startswith("constraints not satisfied:")
        assert "harbor lights" in trace.final_caption.text

        for budget in (1, 3, 5):
            deps = loop_deps(
                ['Thought: stall\nAction: finish(caption="Boats sway at dusk.")'] * 10,
                max_steps=budget,
            )
            trace = run(EVOLVED, image, deps)
            assert trace.terminated_reason is TerminationReason.STEP_BUDGET
            assert len(trace.steps) == budget  # exactly max_steps


# --- 7: tool contracts -----------------------------------------------------------------------------


def flip_sentences(text: str) -> str:
    swaps = {
        "left of": "right of",
        "right of": "left of",
        "above": "below",
        "below": "above",
        "nearer than": "farther than",
        "farther than": "nearer than",
    }
    pattern = re.compile(r"The (\w+) is (left of|right of|above|below|nearer than|farther than) the (\w+)\.")

    def swap(match):
        return f"The {match.group(3)} is {swaps[match.group(2)]} the {match.group(1)}."

    return pattern.sub(swap, text)


def test_criterion_7_tool_contracts(image):
    with criterion(7, "met-flags exact, threshold monotone, swap symmetric"):
        # expand/condense met-flags agree with the canonical counters
        expansions = [
            (["q?", "ans", "a b c d e f"], 5, True),
            (["q?", "ans", "a b c"], 5, False),
        ]
        for script, minimum, expect_met in expansions:
            result = expand_caption(
                image,
                "seed",
                LengthConstraint(LengthUnit.WORDS, min=minimum),
                ScriptedChat(list(script) * 6),
                max_rounds=1,
            )
            assert result.met == expect_met
            assert result.met == (word_count(result.caption) >= minimum)

        condensations = [(["a b c"], 4, True), (["a b c d e f g"], 4, False)]
        for script, maximum, expect_met in condensations:
            result = condense_caption(
                "one two three four five six",
                LengthConstraint(LengthUnit.WORDS, max=maximum),
                ScriptedChat(list(script) * 3),
            )
            assert result.met == expect_met
            assert result.met == (word_count(result.caption) <= maximum)

        sentence_result = condense_caption(
            "One. Two. Three.",
            LengthConstraint(LengthUnit.SENTENCES, max=2),
            ScriptedChat(["One. Two."]),
        )
        assert sentence_result.met == (sentence_count(sentence_result.caption) <= 2)

        # count_objects monotone non-increasing in threshold, randomized scores
        rng = random.Random(5)
        for _ in range(100):
            boxes = [
                BoundingBox(0.1, 0.1, 0.4, 0.4, label="thing", score=round(rng.random(), 3))
                for _ in range(rng.randint(0, 12))
            ]
            detector = FixtureDetector(boxes)
            counts = [
                count_objects(image, "thing", detector, threshold=t)[0]
                for t in [i / 20 for i in range(21)]
            ]
            assert counts == sorted(counts, reverse=True)

        # spatial label-swap symmetry on randomized geometry
        for seed in range(60):
            geo = random.Random(seed)

            def random_box(label):
                x0 = geo.uniform(0.0, 0.7)
                y0 = geo.uniform(0.0, 0.7)
                return BoundingBox(
                    x0, y0, x0 + geo.uniform(0.05, 0.29), y0 + geo.uniform(0.05, 0.29),
                    label=label, score=0.9,
                )

            detector = FixtureDetector([random_box("alpha"), random_box("beta")])
            depth = FixtureDepth(np.abs(np.random.RandomState(seed).normal(1.0, 0.5, (8, 8))))
            forward = spatial_relations(image, ["alpha", "beta"], detector, depth)
            backward = spatial_relations(image, ["beta", "alpha"], detector, depth)
            assert flip_sentences(forward) == backward


# --- 8: offline guarantee ----------------------------------------------------------------------------


def test_criterion_8_offline_guarantee(tmp_path, monkeypatch, network_guard):
    with criterion(8, "fixture and replay modes issue zero network requests"):
        transport_calls = []

        class CountingTransport:
            def post(self, url, headers, payload, timeout):
                transport_calls.append(url)
                raise AssertionError(f"transport used offline: {url}")

        from captionsmith.backends import http as http_mod

        monkeypatch.setattr(http_mod, "default_transport", lambda: CountingTransport())

        for scenario in SCENARIOS:
            assert (
                cli.main(
                    [
                        "caption",
                        "--scenario",
                        str(scenario),
                        "--mode",
                        "fixture",
                        "--trace-out",
                        str(tmp_path / f"{scenario.name}.fixture.jsonl"),
                    ]
                )
                == 0
            )
            assert (
                cli.main(
                    [
                        "replay",
                        "--scenario",
                        str(scenario),
                        "--trace-out",
                        str(tmp_path / f"{scenario.name}.replay.jsonl"),
                    ]
                )
                == 0
            )
        assert cli.main(["index", "--out", str(tmp_path / "idx.jsonl")]) == 0
        assert transport_calls == []
        assert network_guard.attempts == 0
