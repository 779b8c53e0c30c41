from __future__ import annotations

import json
from pathlib import Path

from captionsmith import cli
from captionsmith.constraints import extract_constraint_block, verify_deterministic
from captionsmith.model import Caption

from conftest import FIXTURES, make_png

CYBERCAB = FIXTURES / "scenarios" / "cybercab_context"
REPAIR = FIXTURES / "scenarios" / "repair_keywords"


def scenario_args(scenario: Path, tmp_path: Path, mode: str = "fixture") -> list[str]:
    return [
        "caption",
        "--scenario",
        str(scenario),
        "--mode",
        mode,
        "--trace-out",
        str(tmp_path / "trace.jsonl"),
    ]


# --- caption ---------------------------------------------------------------------


def test_caption_fixture_end_to_end(tmp_path, capsys):
    code = cli.main(scenario_args(CYBERCAB, tmp_path))
    assert code == 0
    printed = capsys.readouterr().out.strip()
    assert "Tesla Cybercab" in printed

    trace_lines = [json.loads(l) for l in (tmp_path / "trace.jsonl").read_text().splitlines()]
    header, footer = trace_lines[0], trace_lines[-1]
    assert footer["reason"] == "final_answer"
    spec = extract_constraint_block(header["spec"])
    assert verify_deterministic(Caption(footer["final_caption"]), spec).overall


def test_caption_replay_byte_identical(tmp_path):
    outputs = []
    for name in ("a.jsonl", "b.jsonl"):
        out = tmp_path / name
        code = cli.main(
            ["replay", "--scenario", str(CYBERCAB), "--trace-out", str(out)]
        )
        assert code == 0
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]


def test_repair_scenario_trace_shape(tmp_path):
    out = tmp_path / "t.jsonl"
    assert cli.main(["replay", "--scenario", str(REPAIR), "--trace-out", str(out)]) == 0
    records = [json.loads(l) for l in out.read_text().splitlines()]
    steps = [r for r in records if r["kind"] == "step"]
    assert len(steps) == 2
    assert steps[0]["observation"].startswith("constraints not satisfied:")
    assert records[-1]["final_caption"] == "Boats sway beneath the harbor lights in the evening calm."


def test_missing_image_is_input_error(tmp_path, capsys):
    code = cli.main(
        [
            "caption",
            "--image",
            str(tmp_path / "nope.png"),
            "--instruction",
            "hi",
            "--trace-out",
            str(tmp_path / "t.jsonl"),
        ]
    )
    assert code == 2
    assert capsys.readouterr().err.strip().startswith("error:")


def make_budget_scenario(tmp_path: Path) -> tuple[Path, Path]:
    scenario = tmp_path / "loopy"
    (scenario / "scripts").mkdir(parents=True)
    (scenario / "image.png").write_bytes(make_png())
    (scenario / "scenario.json").write_text(
        json.dumps({"instruction": "caption it", "image": "image.png", "use_context": False})
    )
    evolver = {"response": "Do it.\n\n---constraints\nlength: max 10 words\n---"}
    (scenario / "scripts" / "evolver.jsonl").write_text(json.dumps(evolver) + "\n")
    step = {"response": 'Thought: again\nAction: call vqa(question="what?")'}
    (scenario / "scripts" / "planner.jsonl").write_text(
        "\n".join([json.dumps(step)] * 10) + "\n"
    )
    (scenario / "scripts" / "toolchat.jsonl").write_text(
        "\n".join([json.dumps({"response": "an answer"})] * 10) + "\n"
    )
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"agent": {"max_steps": 3}}))
    return scenario, config


def test_budget_exhaustion_exits_3_and_writes_trace(tmp_path, capsys):
    scenario, config = make_budget_scenario(tmp_path)
    out = tmp_path / "trace.jsonl"
    code = cli.main(
        [
            "caption",
            "--scenario",
            str(scenario),
            "--config",
            str(config),
            "--trace-out",
            str(out),
        ]
    )
    assert code == 3
    records = [json.loads(l) for l in out.read_text().splitlines()]
    assert records[-1]["reason"] == "step_budget"
    assert len([r for r in records if r["kind"] == "step"]) == 3


# --- evolve -----------------------------------------------------------------------


def test_evolve_fixture_prints_block_and_criteria(tmp_path, capsys):
    code = cli.main(
        [
            "evolve",
            "--scenario",
            str(CYBERCAB),
            "--trace-dir",
            str(tmp_path),
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    spec = extract_constraint_block(out)
    assert spec.keywords == ("Tesla Cybercab",)
    assert "constraint_inheritance: pass" in out
    captured = json.loads((tmp_path / "evolve_trace.json").read_text())
    assert any("Tesla Cybercab" in m["text"] for m in captured["prompt"])


def test_evolve_failure_exits_2(tmp_path, capsys):
    scenario = tmp_path / "bad"
    (scenario / "scripts").mkdir(parents=True)
    (scenario / "image.png").write_bytes(make_png())
    (scenario / "scenario.json").write_text(
        json.dumps({"instruction": "caption it", "image": "image.png", "use_context": False})
    )
    (scenario / "scripts" / "evolver.jsonl").write_text(
        "\n".join(json.dumps({"response": "no block here"}) for _ in range(3)) + "\n"
    )
    code = cli.main(
        ["evolve", "--scenario", str(scenario), "--trace-dir", str(tmp_path / "traces")]
    )
    assert code == 2
    assert "evolve failed" in capsys.readouterr().err


def test_evolve_no_context_flag(tmp_path, capsys):
    code = cli.main(
        [
            "evolve",
            "--scenario",
            str(CYBERCAB),
            "--no-context",
            "--trace-dir",
            str(tmp_path),
        ]
    )
    # without context the first evolver script entry still answers; the prompt
    # must contain no context section
    assert code == 0
    captured = json.loads((tmp_path / "evolve_trace.json").read_text())
    joined = "\n".join(m["text"] for m in captured["prompt"])
    assert "Context notes" not in joined


# --- index ------------------------------------------------------------------------


def test_index_seed_db(tmp_path, capsys):
    out = tmp_path / "seed.idx"
    code = cli.main(["index", "--out", str(out)])
    assert code == 0
    assert capsys.readouterr().out.strip() == "T=10 dim=16"
    first = out.read_bytes()
    assert cli.main(["index", "--out", str(out)]) == 0
    assert out.read_bytes() == first  # rebuild is byte-identical


def test_index_malformed_record_names_line(tmp_path, capsys):
    db = tmp_path / "db.jsonl"
    db.write_text(
        '{"id": "a", "instruction": "x", "steps": [{"thought": "t", "action": "finish(caption=\\"c\\")", "observation": ""}]}\n'
        "{broken\n"
    )
    code = cli.main(["index", "--examples", str(db), "--out", str(tmp_path / "o.idx")])
    assert code == 2
    assert "line 2" in capsys.readouterr().err


# --- verify -----------------------------------------------------------------------


def write_pair(tmp_path: Path, caption: str, block: str) -> tuple[str, str]:
    caption_file = tmp_path / "caption.txt"
    spec_file = tmp_path / "spec.txt"
    caption_file.write_text(caption)
    spec_file.write_text(block)
    return str(caption_file), str(spec_file)


def test_verify_pass(tmp_path, capsys):
    caption_file, spec_file = write_pair(
        tmp_path,
        "A lighthouse guards the bay.",
        '---constraints\nkeywords: "lighthouse"\nlength: max 10 words\n---',
    )
    code = cli.main(["verify", "--caption-file", caption_file, "--spec-file", spec_file])
    assert code == 0
    assert "overall: pass" in capsys.readouterr().out


def test_verify_missing_keyword_exits_1(tmp_path, capsys):
    caption_file, spec_file = write_pair(
        tmp_path,
        "A tower guards the bay.",
        '---constraints\nkeywords: "lighthouse"\n---',
    )
    code = cli.main(["verify", "--caption-file", caption_file, "--spec-file", spec_file])
    assert code == 1
    assert "lighthouse" in capsys.readouterr().out


def test_verify_marks_judged_dimensions_without_judge(tmp_path, capsys):
    caption_file, spec_file = write_pair(
        tmp_path,
        "A tower guards the bay.",
        "---constraints\ngenre: poetry\n---",
    )
    code = cli.main(["verify", "--caption-file", caption_file, "--spec-file", spec_file])
    assert code == 0  # needs_judge is not a deterministic failure
    assert "needs_judge" in capsys.readouterr().out


def test_verify_with_judge_scripts(tmp_path, capsys):
    scenario = tmp_path / "judged"
    (scenario / "scripts").mkdir(parents=True)
    (scenario / "scripts" / "judge.jsonl").write_text(
        json.dumps({"response": "FAIL: tone is neutral"}) + "\n"
    )
    caption_file, spec_file = write_pair(
        tmp_path, "A tower.", "---constraints\nsentiment: positive\n---"
    )
    code = cli.main(
        [
            "verify",
            "--caption-file",
            caption_file,
            "--spec-file",
            spec_file,
            "--judge",
            "--scenario",
            str(scenario),
        ]
    )
    assert code == 1
    out = capsys.readouterr().out
    assert "judged_fail" in out and "tone is neutral" in out


def test_verify_bad_spec_file_exits_2(tmp_path, capsys):
    caption_file, spec_file = write_pair(tmp_path, "x", "no block at all")
    code = cli.main(["verify", "--caption-file", caption_file, "--spec-file", spec_file])
    assert code == 2


# --- offline guarantee across CLI paths ----------------------------------------------


def test_fixture_and_replay_modes_touch_no_network(tmp_path, network_guard):
    assert cli.main(scenario_args(CYBERCAB, tmp_path)) == 0
    assert (
        cli.main(["replay", "--scenario", str(CYBERCAB), "--trace-out", str(tmp_path / "r.jsonl")])
        == 0
    )
    assert network_guard.attempts == 0
