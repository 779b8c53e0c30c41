#!/usr/bin/env python3
"""Constraint blocks: parse, verify, and compare.

A professional instruction carries its requirements in a fenced block. This
demo parses one, checks two captions against it, and shows how inheritance
catches an instruction rewrite that loosened the user's limits.
"""

from captionsmith import (
    Caption,
    check_inheritance,
    extract_constraint_block,
    render_constraint_block,
    verify_deterministic,
)

INSTRUCTION = """Caption the reveal photo for a product page.

---constraints
keywords: "Tesla Cybercab"
length: max 25 words
format: plain
---"""

spec = extract_constraint_block(INSTRUCTION)
print("parsed spec dimensions:", ", ".join(spec.dimensions()))
print()
print("canonical block:")
print(render_constraint_block(spec))
print()

good = Caption("The gold Tesla Cybercab poses under stage lights, doors raised.")
bad = Caption("A golden robotaxi poses under stage lights, doors raised like wings.")

for caption in (good, bad):
    print(f"caption: {caption.text}")
    print(verify_deterministic(caption, spec).render())
    print()

# The evolver may tighten the user's constraints but never loosen them.
user_spec = extract_constraint_block("---constraints\nlength: max 25 words\n---")
tightened = extract_constraint_block("---constraints\nlength: min 10 words, max 20 words\n---")
loosened = extract_constraint_block("---constraints\nlength: max 40 words\n---")
print("tightened inherits:", check_inheritance(user_spec, tightened).ok)
result = check_inheritance(user_spec, loosened)
print("loosened inherits:", result.ok, "| violations:", ", ".join(result.violations))
