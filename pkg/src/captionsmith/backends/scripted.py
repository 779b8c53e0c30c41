"""Scripted fixture backends: deterministic, offline, no model anywhere."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from ..errors import BackendError, SchemaError
from ..model import ImageRef, Provenance
from ..retrieval import Vector
from .base import (
    BackendId,
    BackendRole,
    BoundingBox,
    ChatMessage,
    require_nonempty_messages,
    require_nonempty_text,
)


class ScriptedChat:
    """Replies from an ordered script; each entry may pin an expected substring.

    The received message lists are kept in ``calls`` so tests can assert on
    the prompts that were actually sent.
    """

    def __init__(self, entries: Sequence[Union[str, dict]], name: str = "script"):
        self.backend_id = BackendId(BackendRole.CHAT, "fixture", name)
        self.provenance = Provenance.FIXTURE
        self._entries: list[dict] = [
            {"response": e} if isinstance(e, str) else dict(e) for e in entries
        ]
        self._cursor = 0
        self.calls: list[tuple[ChatMessage, ...]] = []

    def chat(self, messages: Sequence[ChatMessage]) -> str:
        require_nonempty_messages(messages)
        self.calls.append(tuple(messages))
        if self._cursor >= len(self._entries):
            raise BackendError(
                f"chat script {self.backend_id.model_name!r} exhausted after "
                f"{len(self._entries)} replies"
            )
        entry = self._entries[self._cursor]
        self._cursor += 1
        expect = entry.get("expect_contains")
        if expect:
            joined = "\n".join(m.text for m in messages)
            if expect not in joined:
                raise BackendError(
                    f"script {self.backend_id.model_name!r} expected prompt to contain "
                    f"{expect!r}"
                )
        return entry["response"]


def load_chat_script(path: Union[str, Path], name: Optional[str] = None) -> ScriptedChat:
    entries = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            entries.append(json.loads(line))
    return ScriptedChat(entries, name=name or Path(path).stem)


class DigestChat:
    """Replies keyed by the canonical request digest."""

    def __init__(self, responses: dict[str, str], name: str = "digest-map"):
        self.backend_id = BackendId(BackendRole.CHAT, "fixture", name)
        self.provenance = Provenance.FIXTURE
        self._responses = dict(responses)

    def chat(self, messages: Sequence[ChatMessage]) -> str:
        from .base import digest_chat

        require_nonempty_messages(messages)
        digest = digest_chat(messages)
        if digest not in self._responses:
            raise BackendError(f"no scripted response for request {digest}")
        return self._responses[digest]


class HashEmbedder:
    """Deterministic hash-seeded embeddings; stable across processes.

    Not a real embedding model: two texts map to unrelated directions. Good
    enough to make retrieval order well-defined in tests and fixtures.
    """

    def __init__(self, dim: int = 16, salt: str = "v1"):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self._salt = salt
        self.backend_id = BackendId(BackendRole.EMBED, "fixture", f"hash-{dim}-{salt}")

    def embed(self, text: str) -> Vector:
        require_nonempty_text(text, "embedding input")
        seed = hashlib.sha256(f"{self._salt}\x00{text}".encode("utf-8")).digest()
        components = []
        for i in range(self.dim):
            h = hashlib.sha256(seed + i.to_bytes(4, "big")).digest()
            u = int.from_bytes(h[:8], "big") / 2.0**64
            components.append(2.0 * u - 1.0)
        return Vector(tuple(components))


class FixtureDetector:
    """Serves a fixed detection set, filtered by label (case-insensitive)."""

    def __init__(self, boxes: Sequence[BoundingBox], name: str = "boxes"):
        self.backend_id = BackendId(BackendRole.DETECT, "fixture", name)
        self._boxes = tuple(boxes)

    def detect(self, image: ImageRef, label: str) -> tuple[BoundingBox, ...]:
        require_nonempty_text(label, "detection label")
        wanted = label.lower()
        return tuple(b for b in self._boxes if b.label.lower() == wanted)


def load_detections(path: Union[str, Path]) -> FixtureDetector:
    """Read a per-image detection record; schema errors name the bad field."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    records = raw.get("detections")
    if not isinstance(records, list):
        raise SchemaError(f"{path}: 'detections' must be a list")
    boxes = []
    for i, record in enumerate(records):
        for fname in ("label", "score", "box"):
            if fname not in record:
                raise SchemaError(f"{path}: detection {i} is missing field '{fname}'")
        box = record["box"]
        if not (isinstance(box, list) and len(box) == 4):
            raise SchemaError(f"{path}: detection {i} field 'box' must be [x0, y0, x1, y1]")
        try:
            boxes.append(
                BoundingBox(
                    x_min=float(box[0]),
                    y_min=float(box[1]),
                    x_max=float(box[2]),
                    y_max=float(box[3]),
                    label=str(record["label"]),
                    score=float(record["score"]),
                )
            )
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: detection {i} is invalid: {exc}") from exc
    return FixtureDetector(boxes, name=Path(path).stem)


class FixtureDepth:
    """Serves one fixed depth map with declared dimensions."""

    def __init__(self, depth_map: np.ndarray, name: str = "depth"):
        if depth_map.ndim != 2:
            raise ValueError("depth map must be 2-D")
        if np.any(depth_map < 0):
            raise ValueError("depth values must be nonnegative")
        self.backend_id = BackendId(BackendRole.DEPTH, "fixture", name)
        self._map = depth_map.astype(np.float64)

    def estimate_depth(self, image: ImageRef) -> np.ndarray:
        return self._map.copy()


def load_depth_map(path: Union[str, Path]) -> FixtureDepth:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    for fname in ("width", "height", "values"):
        if fname not in raw:
            raise SchemaError(f"{path}: depth record is missing field '{fname}'")
    values = np.array(raw["values"], dtype=np.float64)
    if values.ndim != 2 or values.shape != (raw["height"], raw["width"]):
        raise SchemaError(
            f"{path}: field 'values' has shape {values.shape}, "
            f"declared {raw['height']}x{raw['width']}"
        )
    return FixtureDepth(values, name=Path(path).stem)


class UnavailableDetector:
    """Stands in when a scenario ships no detection fixture."""

    def __init__(self):
        self.backend_id = BackendId(BackendRole.DETECT, "fixture", "unavailable")

    def detect(self, image: ImageRef, label: str) -> tuple[BoundingBox, ...]:
        raise BackendError("no detection fixture configured")


class UnavailableDepth:
    def __init__(self):
        self.backend_id = BackendId(BackendRole.DEPTH, "fixture", "unavailable")

    def estimate_depth(self, image: ImageRef) -> np.ndarray:
        raise BackendError("no depth fixture configured")
