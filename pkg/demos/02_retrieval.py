#!/usr/bin/env python3
"""Retrieval-augmented planning: pick worked examples by cosine similarity.

The planner prompt ends with the stored examples most similar to the current
request. This demo builds the index over the packaged seed database, queries
it with two different requests, and prints the assembled prompt tail.
"""

from captionsmith import assemble_prompt, build_index, top_n
from captionsmith.backends import HashEmbedder
from captionsmith.cli import default_example_db
from captionsmith.retrieval import load_examples

examples = load_examples(default_example_db())
by_id = {ex.id: ex for ex in examples}
embedder = HashEmbedder(16)
store = build_index(examples, embedder)
print(f"indexed {len(store)} examples at dim {store.dim} with {store.embedder_id}")

for request in (
    "Say exactly how many boats are in the marina.",
    "Write an upbeat two-line poem about this photo.",
):
    print()
    print("request:", request)
    ranked = top_n(embedder.embed(request), store, 3)
    for example_id, score in ranked:
        print(f"  {score:+.3f}  {example_id}: {by_id[example_id].instruction}")

selected = [by_id[eid] for eid, _ in top_n(embedder.embed("count the cups"), store, 2)]
prompt = assemble_prompt("You are a captioning agent.", selected)
print()
print("prompt tail:")
print("\n".join(prompt.splitlines()[-10:]))
