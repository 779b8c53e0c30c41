#!/usr/bin/env python3
"""Materialize the committed scenario fixtures and mint their replay cassettes.

Each scenario is declared below as plain data: the user instruction, scripted
backend replies, and any context/detection/depth fixtures. The script writes
the scenario directories under fixtures/scenarios/, runs the real caption
pipeline once in record mode (fixture provider) to produce cassettes, then
replays twice and checks byte-identical traces plus a passing verification,
so a broken scenario can never be committed silently.

Run from the repository root:  python3 scripts/build_scenarios.py
"""

from __future__ import annotations

import json
import shutil
import struct
import sys
import tempfile
import zlib
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from captionsmith import cli  # noqa: E402
from captionsmith.constraints import extract_constraint_block, verify_deterministic  # noqa: E402
from captionsmith.model import Caption  # noqa: E402

SCENARIOS_DIR = REPO / "fixtures" / "scenarios"


def make_png(width: int, height: int, rgb: tuple[int, int, int]) -> bytes:
    def chunk(tag: bytes, data: bytes) -> bytes:
        return (
            struct.pack(">I", len(data))
            + tag
            + data
            + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)
        )

    header = struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0)
    raw = (b"\x00" + bytes(rgb) * width) * height
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", header)
        + chunk(b"IDAT", zlib.compress(raw, 9))
        + chunk(b"IEND", b"")
    )


def reply(text: str, expect: str | None = None) -> dict:
    entry = {"response": text}
    if expect:
        entry["expect_contains"] = expect
    return entry


def planner_step(thought: str, action: str) -> str:
    return f"Thought: {thought}\nAction: {action}"


CYBERCAB_EVOLVED = """Write a confident product-page caption for the gold Tesla Cybercab robotaxi shown on stage. Lead with the butterfly doors and the driverless two-seat cabin, and close with its production outlook.

---constraints
sentiment: positive (confident)
focus_content: "butterfly doors", "two-seat cabin"
keywords: "Tesla Cybercab"
length: max 60 words
---"""

CYBERCAB_CAPTION = (
    "The Tesla Cybercab gleams in gold on its turntable, butterfly doors raised over a "
    "driverless two-seat cabin with no steering wheel in sight. Tesla pitches this robotaxi "
    "as a ride you hail, not drive, with production slated before 2027."
)

BULLETS_EVOLVED = """Inventory the desk scene as a tidy bullet list so each object gets one line.

---constraints
focus_content: "each distinct object"
length: min 3 sentences
format: bullets
---"""

BULLETS_CAPTION = (
    "- A silver laptop sits open at the desk's center.\n"
    "- A white mug steams beside the trackpad.\n"
    "- A spiral notebook lies closed on the left."
)

POEM_EVOLVED = """Render the dawn lake scene as a brief, warm poem of gentle wonder.

---constraints
sentiment: positive (gentle wonder)
length: max 30 words
genre: poetry
---"""

POEM_BASE = "A snowy mountain reflected in a still lake at dawn."
POEM_REWRITE = "Dawn warms the snowy mountain, and the still lake cradles its glowing reflection."
POEM_CAPTION = (
    "Dawn spills gold on quiet snow.\n"
    "The lake holds the mountain close,\n"
    "and morning, soft and slow,\n"
    "wakes the world it loves the most."
)

COUNT_EVOLVED = """Count the cars precisely, then caption the junction in exactly two sentences that mention rush hour.

---constraints
focus_content: "the number of cars"
keywords: "rush hour"
length: min 2 sentences, max 2 sentences
---"""

COUNT_CAPTION = (
    "Four cars crowd the junction as rush hour builds. "
    "Brake lights stretch back past the crosswalk."
)

SPATIAL_EVOLVED = """Describe the living room layout exactly as it reads from the entrance, placing the sofa, lamp, and rug relative to each other.

---constraints
view: from the entrance
focus_content: "sofa", "lamp", "rug"
length: max 40 words
format: plain
---"""

SPATIAL_CAPTION = (
    "From the entrance, the sofa anchors the near left, the woven rug spreads right of it, "
    "and the floor lamp rises behind them on the right, above the rug."
)

REPAIR_EVOLVED = """Describe the waterfront after dark in a single sentence that mentions the harbor lights.

---constraints
keywords: "harbor lights"
length: min 1 sentences, max 1 sentences
---"""

REPAIR_DRAFT = "Boats sway in the evening calm."
REPAIR_CAPTION = "Boats sway beneath the harbor lights in the evening calm."


def dsl_quote(text: str) -> str:
    escaped = (
        text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t")
    )
    return f'"{escaped}"'


SCENARIOS = [
    {
        "name": "cybercab_context",
        "instruction": 'Caption this for a product page and mention "Tesla Cybercab", within 60 words.',
        "rgb": (212, 175, 55),
        "use_context": True,
        "image_hits": [
            {"title": "Tesla Cybercab unveiled at the We, Robot event", "url": "https://example.com/1"},
            {"title": "Tesla Cybercab robotaxi: release window and price", "url": "https://example.com/2"},
            {"title": "Gold Tesla Cybercab prototype on stage", "url": "https://example.com/3"},
            {"title": "Cybercab: Tesla's two-seat autonomous taxi", "url": "https://example.com/4"},
            {"title": "Tesla shows Cybercab with butterfly doors", "url": "https://example.com/5"},
        ],
        "searches": {
            "tesla cybercab specifications": [
                "The Cybercab is a two-seat autonomous robotaxi with butterfly doors and no steering wheel.",
                "Tesla says the Cybercab uses inductive charging.",
            ],
            "tesla cybercab release date": [
                "Tesla aims to produce the Cybercab before 2027.",
            ],
        },
        "scripts": {
            "summarizer": [
                reply("tesla cybercab specifications\ntesla cybercab release date"),
                reply(
                    "The image shows the Tesla Cybercab, a gold two-seat autonomous robotaxi "
                    "with butterfly doors and no steering wheel, unveiled at Tesla's We, Robot "
                    "event; production is planned before 2027."
                ),
            ],
            "evolver": [reply(CYBERCAB_EVOLVED, expect="Tesla Cybercab")],
            "planner": [
                reply(
                    planner_step(
                        "I need a factual base description before weaving in the required phrases.",
                        'call vqa(question="Describe the vehicle and its setting in one sentence.")',
                    )
                ),
                reply(
                    planner_step(
                        "Now fold in the keyword, the doors, the cabin, and the outlook within 60 words.",
                        f"finish(caption={dsl_quote(CYBERCAB_CAPTION)})",
                    ),
                    expect="turntable",
                ),
            ],
            "toolchat": [
                reply(
                    "A gold, low-slung two-seat coupe with upward-opening doors sits on a lit turntable."
                )
            ],
            "judge": [
                reply("PASS: everything named is visible on stage"),
                reply("PASS: tailored to the pictured prototype"),
                reply("PASS: no contradictory requirements"),
            ],
        },
    },
    {
        "name": "bullet_inventory",
        "instruction": "List the main objects in this photo as bullet points.",
        "rgb": (90, 110, 130),
        "use_context": False,
        "scripts": {
            "evolver": [reply(BULLETS_EVOLVED)],
            "planner": [
                reply(
                    planner_step(
                        "First find out what the main objects are.",
                        'call vqa(question="List the main objects in the image.")',
                    )
                ),
                reply(
                    planner_step(
                        "Three objects, one bullet line each.",
                        f"finish(caption={dsl_quote(BULLETS_CAPTION)})",
                    )
                ),
            ],
            "toolchat": [reply("A laptop, a mug, and a notebook on a wooden desk.")],
        },
    },
    {
        "name": "sentiment_poem",
        "instruction": "Give me a short positive caption in the style of a poem.",
        "rgb": (120, 160, 220),
        "use_context": False,
        "scripts": {
            "evolver": [reply(POEM_EVOLVED)],
            "planner": [
                reply(
                    planner_step(
                        "Learn what the image shows.",
                        'call vqa(question="What does the image show?")',
                    )
                ),
                reply(
                    planner_step(
                        "Warm the tone before shaping the poem.",
                        "call modify_sentiment(caption="
                        + dsl_quote(POEM_BASE)
                        + ', sentiment=positive, tone="gentle wonder")',
                    )
                ),
                reply(
                    planner_step(
                        "Now compress the warmed description into short verse under 30 words.",
                        f"finish(caption={dsl_quote(POEM_CAPTION)})",
                    )
                ),
            ],
            "toolchat": [reply(POEM_BASE), reply(POEM_REWRITE)],
        },
    },
    {
        "name": "count_traffic",
        "instruction": 'How many cars are at the junction? Caption it in 2 sentences and mention "rush hour".',
        "rgb": (40, 40, 48),
        "use_context": False,
        "detections": [
            {"label": "car", "score": 0.92, "box": [0.05, 0.55, 0.25, 0.80]},
            {"label": "car", "score": 0.88, "box": [0.30, 0.50, 0.50, 0.78]},
            {"label": "car", "score": 0.71, "box": [0.55, 0.52, 0.72, 0.76]},
            {"label": "car", "score": 0.55, "box": [0.75, 0.55, 0.95, 0.79]},
            {"label": "car", "score": 0.30, "box": [0.45, 0.30, 0.55, 0.40]},
        ],
        "scripts": {
            "evolver": [reply(COUNT_EVOLVED)],
            "planner": [
                reply(
                    planner_step(
                        "Counting must come from the detector, not a guess.",
                        'call count_objects(label="car")',
                    )
                ),
                reply(
                    planner_step(
                        "Four confident detections; two sentences with the keyword.",
                        f"finish(caption={dsl_quote(COUNT_CAPTION)})",
                    ),
                    expect="count=4",
                ),
            ],
        },
    },
    {
        "name": "spatial_room",
        "instruction": "Describe the layout of the living room from the entrance.",
        "rgb": (150, 120, 90),
        "use_context": False,
        "detections": [
            {"label": "sofa", "score": 0.95, "box": [0.05, 0.45, 0.45, 0.85]},
            {"label": "lamp", "score": 0.90, "box": [0.60, 0.15, 0.80, 0.55]},
            {"label": "rug", "score": 0.85, "box": [0.30, 0.75, 0.90, 0.98]},
        ],
        "depth": {
            "width": 10,
            "height": 10,
            "values": [[1.0 + c / 9.0 for c in range(10)] for _ in range(10)],
        },
        "scripts": {
            "evolver": [reply(SPATIAL_EVOLVED)],
            "planner": [
                reply(
                    planner_step(
                        "Get the geometry from detections and depth before wording anything.",
                        'call spatial_relations(labels="sofa, lamp, rug")',
                    )
                ),
                reply(
                    planner_step(
                        "Turn the relations into one plain sentence under 40 words.",
                        f"finish(caption={dsl_quote(SPATIAL_CAPTION)})",
                    ),
                    expect="The sofa is left of the lamp.",
                ),
            ],
        },
    },
    {
        "name": "repair_keywords",
        "instruction": 'Caption the waterfront at night in 1 sentence, mentioning "harbor lights".',
        "rgb": (20, 30, 60),
        "use_context": False,
        "scripts": {
            "evolver": [reply(REPAIR_EVOLVED)],
            "planner": [
                reply(
                    planner_step(
                        "One calm sentence should do.",
                        f"finish(caption={dsl_quote(REPAIR_DRAFT)})",
                    )
                ),
                reply(
                    planner_step(
                        "The check rejected it for the missing phrase; add the harbor lights.",
                        f"finish(caption={dsl_quote(REPAIR_CAPTION)})",
                    ),
                    expect="constraints not satisfied",
                ),
            ],
        },
    },
]


def write_scenario(spec: dict) -> Path:
    root = SCENARIOS_DIR / spec["name"]
    if root.exists():
        shutil.rmtree(root)
    root.mkdir(parents=True)
    (root / "image.png").write_bytes(make_png(16, 16, spec["rgb"]))
    (root / "scenario.json").write_text(
        json.dumps(
            {
                "instruction": spec["instruction"],
                "image": "image.png",
                "use_context": spec["use_context"],
            },
            indent=1,
            sort_keys=True,
        )
        + "\n"
    )
    scripts_dir = root / "scripts"
    scripts_dir.mkdir()
    for role, entries in spec["scripts"].items():
        lines = [json.dumps(e, sort_keys=True) for e in entries]
        (scripts_dir / f"{role}.jsonl").write_text("\n".join(lines) + "\n")
    if spec.get("image_hits"):
        context_dir = root / "context"
        (context_dir / "searches").mkdir(parents=True)
        (context_dir / "image_hits.json").write_text(
            json.dumps(spec["image_hits"], indent=1) + "\n"
        )
        for i, (query, snippets) in enumerate(spec["searches"].items()):
            (context_dir / "searches" / f"q{i}.json").write_text(
                json.dumps({"query": query, "snippets": snippets}, indent=1) + "\n"
            )
    if spec.get("detections"):
        (root / "detections.json").write_text(
            json.dumps({"detections": spec["detections"]}, indent=1) + "\n"
        )
    if spec.get("depth"):
        (root / "depth.json").write_text(json.dumps(spec["depth"]) + "\n")
    return root


def record_and_check(root: Path) -> None:
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        code = cli.main(
            [
                "caption",
                "--scenario",
                str(root),
                "--mode",
                "record",
                "--trace-out",
                str(tmp / "record.jsonl"),
            ]
        )
        if code != 0:
            raise SystemExit(f"{root.name}: record run exited {code}")

        replays = []
        for i in (1, 2):
            out = tmp / f"replay{i}.jsonl"
            code = cli.main(
                ["replay", "--scenario", str(root), "--trace-out", str(out)]
            )
            if code != 0:
                raise SystemExit(f"{root.name}: replay {i} exited {code}")
            replays.append(out.read_bytes())
        if replays[0] != replays[1]:
            raise SystemExit(f"{root.name}: replays are not byte-identical")

        footer = json.loads(replays[0].decode().splitlines()[-1])
        header = json.loads(replays[0].decode().splitlines()[0])
        caption = Caption(footer["final_caption"])
        spec = extract_constraint_block(header["spec"])
        report = verify_deterministic(caption, spec)
        if not report.overall:
            raise SystemExit(f"{root.name}: final caption fails verification\n{report.render()}")
    print(f"  {root.name}: ok ({len(list((root / 'cassettes').iterdir()))} cassette files)")


def main() -> None:
    SCENARIOS_DIR.mkdir(parents=True, exist_ok=True)
    for spec in SCENARIOS:
        root = write_scenario(spec)
        record_and_check(root)
    print(f"built {len(SCENARIOS)} scenarios under {SCENARIOS_DIR}")


if __name__ == "__main__":
    main()
