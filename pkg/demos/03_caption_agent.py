#!/usr/bin/env python3
"""The full captioning loop on a committed scenario, via the library API.

Runs the count_traffic scenario offline: the scripted planner calls the
object counter, reads its observation, and finishes with a caption that the
constraint checks accept. The printed trace shows every thought, action, and
observation.
"""

from pathlib import Path

from captionsmith import serialize_action
from captionsmith.cli import build_agent_deps, build_session, load_scenario
from captionsmith.agent import run
from captionsmith.config import RunConfig
from captionsmith.constraints import render_constraint_block, verify_deterministic
from captionsmith.context import ContextBundle
from captionsmith.evolver import evolve
from captionsmith.model import ImageRef, Instruction

scenario_dir = Path(__file__).resolve().parents[1] / "fixtures" / "scenarios" / "count_traffic"
manifest = load_scenario(scenario_dir)
config = RunConfig(mode="fixture", scenario_dir=scenario_dir, use_context=False)
session = build_session(config)

image = ImageRef.from_file(scenario_dir / manifest["image"])
instruction = Instruction(text=manifest["instruction"], image=image)
print("user request:", instruction.text)

evolved = evolve(instruction, ContextBundle.empty(), session.chat("evolver"))
print()
print("professional instruction:")
print(evolved.text)

deps = build_agent_deps(session)
deps.query_text = instruction.text
trace = run(evolved, image, deps)

print()
print("trace:")
for step in trace.steps:
    print(f"  [{step.index}] thought: {step.thought}")
    print(f"      action:  {serialize_action(step.action)}")
    if step.observation:
        print(f"      observed: {step.observation}")

print()
print("finished:", trace.terminated_reason.value)
print("caption:", trace.final_caption.text)
print()
print(verify_deterministic(trace.final_caption, evolved.spec).render())
print()
print("against block:")
print(render_constraint_block(evolved.spec))
