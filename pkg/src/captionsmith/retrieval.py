"""Retrieval-augmented planning support.

Worked examples (instruction + thought/action/observation steps) are embedded
into a flat vector store; at run time the instruction is embedded with the
same model and the most similar examples are appended to the planner's system
prompt. Similarity is plain cosine, sim(a, b) = a.b / (|a| |b|), and
selection is an exact brute-force scan: the curated example set is small, so
exactness beats speed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence, Union

import numpy as np

from .actions import parse_action, serialize_action
from .errors import DimensionMismatch, ParseError, SchemaError, ZeroVector

if TYPE_CHECKING:
    from .backends.base import EmbedBackend

TOP_N_DEFAULT = 4

STORE_FORMAT_VERSION = 1
EXAMPLES_SECTION_OPEN = "=== worked examples ==="
EXAMPLES_SECTION_CLOSE = "=== end examples ==="


@dataclass(frozen=True)
class Vector:
    """A fixed-length embedding; components must be finite."""

    components: tuple[float, ...]

    def __post_init__(self):
        if not self.components:
            raise ValueError("vector must have at least one component")
        object.__setattr__(self, "components", tuple(float(c) for c in self.components))
        if not all(math.isfinite(c) for c in self.components):
            raise ValueError("vector components must be finite")

    @property
    def dim(self) -> int:
        return len(self.components)


@dataclass(frozen=True)
class ChainExample:
    """A stored worked example: an instruction and its solution steps."""

    id: str
    instruction: str
    steps: tuple[tuple[str, str, str], ...]  # (thought, action text, observation)

    def __post_init__(self):
        if not self.id:
            raise ValueError("example id is empty")
        if not self.steps:
            raise ValueError("example has no steps")
        for _, action_text, _ in self.steps:
            parse_action(action_text)  # raises ParseError on a bad example


@dataclass(frozen=True)
class VectorStore:
    """Immutable flat index of (example id, vector) pairs."""

    dim: int
    embedder_id: str
    entries: tuple[tuple[str, Vector], ...]

    def __post_init__(self):
        ids = [eid for eid, _ in self.entries]
        if len(ids) != len(set(ids)):
            raise ValueError("store entry ids must be unique")
        for eid, vec in self.entries:
            if vec.dim != self.dim:
                raise DimensionMismatch(f"entry {eid!r} has dim {vec.dim}, store has {self.dim}")

    def __len__(self) -> int:
        return len(self.entries)

    @cached_property
    def _matrix(self) -> np.ndarray:
        return np.array([vec.components for _, vec in self.entries], dtype=np.float64)

    @cached_property
    def _norms(self) -> np.ndarray:
        return np.linalg.norm(self._matrix, axis=1)


def cosine_similarity(a: Vector, b: Vector) -> float:
    """sim(a, b) = a.b / (|a| |b|), clamped to [-1, 1] against rounding.

    Each vector is scaled by its largest magnitude first; the ratio is
    unchanged and the norms can no longer underflow or overflow.
    """
    if a.dim != b.dim:
        raise DimensionMismatch(f"vectors have dims {a.dim} and {b.dim}")
    scale_a = max(abs(x) for x in a.components)
    scale_b = max(abs(x) for x in b.components)
    if scale_a == 0.0 or scale_b == 0.0:
        raise ZeroVector("cosine similarity is undefined for a zero vector")
    xs = [x / scale_a for x in a.components]
    ys = [y / scale_b for y in b.components]
    norm_x = math.sqrt(sum(x * x for x in xs))
    norm_y = math.sqrt(sum(y * y for y in ys))
    dot = sum(x * y for x, y in zip(xs, ys))
    return max(-1.0, min(1.0, dot / (norm_x * norm_y)))


def top_n(query: Vector, store: VectorStore, n: int) -> list[tuple[str, float]]:
    """The min(n, len(store)) most similar entries, descending score.

    Exact ties keep insertion order (earlier entries first).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not store.entries:
        raise ValueError("store is empty")
    if query.dim != store.dim:
        raise DimensionMismatch(f"query has dim {query.dim}, store has {store.dim}")
    q = np.array(query.components, dtype=np.float64)
    q_norm = float(np.linalg.norm(q))
    if q_norm == 0.0:
        raise ZeroVector("query vector is all-zero")
    if np.any(store._norms == 0.0):
        zero_id = store.entries[int(np.argmax(store._norms == 0.0))][0]
        raise ZeroVector(f"store entry {zero_id!r} is all-zero")
    scores = np.clip((store._matrix @ q) / (store._norms * q_norm), -1.0, 1.0)
    order = np.argsort(-scores, kind="stable")[: min(n, len(store.entries))]
    return [(store.entries[int(i)][0], float(scores[int(i)])) for i in order]


def build_index(examples: Sequence[ChainExample], embedder: "EmbedBackend") -> VectorStore:
    """Embed each example's instruction into a fresh store."""
    if not examples:
        raise ValueError("no examples to index")
    ids = [ex.id for ex in examples]
    if len(ids) != len(set(ids)):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate example ids: {', '.join(dupes)}")
    entries = tuple((ex.id, embedder.embed(ex.instruction)) for ex in examples)
    return VectorStore(dim=embedder.dim, embedder_id=str(embedder.backend_id), entries=entries)


# --- prompt assembly ----------------------------------------------------------


def render_example(example: ChainExample) -> str:
    lines = [f"--- example {example.id} ---", f"Instruction: {example.instruction}"]
    for thought, action_text, observation in example.steps:
        lines.append(f"Thought: {thought}")
        lines.append(f"Action: {serialize_action(parse_action(action_text))}")
        if observation:
            lines.append(f"Observation: {observation}")
    return "\n".join(lines)


def assemble_prompt(base_system_prompt: str, selected: Sequence[ChainExample]) -> str:
    """Append the selected examples, in order, to the end of the base prompt."""
    parts = [base_system_prompt, "", EXAMPLES_SECTION_OPEN]
    for example in selected:
        parts.append(render_example(example))
    parts.append(EXAMPLES_SECTION_CLOSE)
    return "\n".join(parts)


# --- persistence --------------------------------------------------------------


def _dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def save_store(store: VectorStore, path: Union[str, Path]) -> None:
    """Write the store as versioned JSON lines; identical stores write identical bytes."""
    lines = [
        _dumps(
            {
                "format_version": STORE_FORMAT_VERSION,
                "dim": store.dim,
                "embedder_id": store.embedder_id,
                "count": len(store.entries),
            }
        )
    ]
    for eid, vec in store.entries:
        lines.append(_dumps({"id": eid, "vector": list(vec.components)}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_store(path: Union[str, Path]) -> VectorStore:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise SchemaError(f"index file is empty: {path}")
    header = json.loads(lines[0])
    if header.get("format_version") != STORE_FORMAT_VERSION:
        raise SchemaError(f"unsupported index format_version: {header.get('format_version')!r}")
    entries = []
    for line in lines[1:]:
        record = json.loads(line)
        entries.append((record["id"], Vector(tuple(record["vector"]))))
    if len(entries) != header["count"]:
        raise SchemaError(f"index header says {header['count']} entries, file has {len(entries)}")
    return VectorStore(dim=header["dim"], embedder_id=header["embedder_id"], entries=tuple(entries))


def load_examples(path: Union[str, Path]) -> list[ChainExample]:
    """Read a line-delimited example database; errors name the offending line."""
    examples: list[ChainExample] = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            steps = tuple(
                (step["thought"], step["action"], step.get("observation", ""))
                for step in record["steps"]
            )
            examples.append(
                ChainExample(id=record["id"], instruction=record["instruction"], steps=steps)
            )
        except (KeyError, TypeError, ValueError, ParseError) as exc:
            raise SchemaError(f"bad example record at line {line_no}: {exc}") from exc
    return examples


def save_examples(examples: Iterable[ChainExample], path: Union[str, Path]) -> None:
    lines = []
    for ex in examples:
        lines.append(
            _dumps(
                {
                    "id": ex.id,
                    "instruction": ex.instruction,
                    "steps": [
                        {"thought": t, "action": a, "observation": o} for t, a, o in ex.steps
                    ],
                }
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
