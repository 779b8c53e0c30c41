#!/usr/bin/env python3
"""Instruction evolving with web context, on the committed Cybercab scenario.

Similar-image titles are distilled into follow-up queries, the search
snippets are summarized into a context note, and the evolver turns the
one-line user request into a constraint-rich instruction. The four quality
criteria are then checked: three by a scripted judge, inheritance exactly.
"""

from pathlib import Path

from captionsmith.cli import build_run_context, build_session, load_scenario
from captionsmith.config import RunConfig
from captionsmith.evolver import evolve, extract_user_spec, validate_evolution
from captionsmith.model import ImageRef, Instruction

scenario_dir = Path(__file__).resolve().parents[1] / "fixtures" / "scenarios" / "cybercab_context"
manifest = load_scenario(scenario_dir)
config = RunConfig(mode="fixture", scenario_dir=scenario_dir)
session = build_session(config)

image = ImageRef.from_file(scenario_dir / manifest["image"])
instruction = Instruction(text=manifest["instruction"], image=image)
print("user request:", instruction.text)

user_spec = extract_user_spec(instruction.text)
print("explicit user constraints:", ", ".join(user_spec.dimensions()) or "(none)")

bundle = build_run_context(session, image, instruction.text)
print()
print("similar-image titles:")
for hit in bundle.image_hits:
    print(f"  {hit.rank}. {hit.title}")
print("follow-up queries:", ", ".join(bundle.queries))
print("context note:", bundle.summary)

evolved = evolve(instruction, bundle, session.chat("evolver"))
print()
print("professional instruction:")
print(evolved.text)

report = validate_evolution(instruction, user_spec, evolved, session.chat("judge"))
print()
print("criteria:")
print(report.render())
