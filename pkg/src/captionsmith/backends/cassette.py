"""Record/replay cassettes for backend calls.

A cassette is an ordered list of (request digest, response) records. In
record mode a wrapper forwards to the wrapped backend and appends each
exchange; in replay mode it serves recorded responses and insists that every
request digest matches the next recorded one exactly, so replays are
bit-deterministic and issue no network traffic at all.
"""

from __future__ import annotations

import json
import threading
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from ..errors import CassetteMismatch, DimensionDrift
from ..model import ImageRef, Provenance
from ..retrieval import Vector
from .base import (
    BackendId,
    BackendRole,
    BoundingBox,
    ChatBackend,
    ChatMessage,
    DepthBackend,
    DetectBackend,
    EmbedBackend,
    digest_chat,
    digest_depth,
    digest_detect,
    digest_embed,
)

CASSETTE_FORMAT_VERSION = 1


class CassetteMode(str, Enum):
    RECORD = "record"
    REPLAY = "replay"
    PASSTHROUGH = "passthrough"


class Cassette:
    """Ordered (digest, response) records for one backend role."""

    def __init__(self, role: BackendRole, mode: CassetteMode, meta: Optional[dict] = None):
        self.role = role
        self.mode = mode
        self.meta = dict(meta or {})
        self._records: list[tuple[str, object]] = []
        self._cursor = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._records)

    def append(self, digest: str, response: object) -> None:
        with self._lock:
            self._records.append((digest, response))

    def next_response(self, digest: str) -> object:
        with self._lock:
            if self._cursor >= len(self._records):
                raise CassetteMismatch(
                    f"{self.role.value} cassette exhausted; no recording for request {digest}"
                )
            recorded_digest, response = self._records[self._cursor]
            if recorded_digest != digest:
                raise CassetteMismatch(
                    f"{self.role.value} cassette expected request {recorded_digest}, got {digest}"
                )
            self._cursor += 1
            return response

    def save(self, path: Union[str, Path]) -> None:
        lines = [
            json.dumps(
                {
                    "format_version": CASSETTE_FORMAT_VERSION,
                    "role": self.role.value,
                    "meta": self.meta,
                },
                sort_keys=True,
                separators=(",", ":"),
            )
        ]
        for digest, response in self._records:
            lines.append(
                json.dumps(
                    {"digest": digest, "response": response},
                    sort_keys=True,
                    separators=(",", ":"),
                )
            )
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path], mode: CassetteMode = CassetteMode.REPLAY) -> "Cassette":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines:
            raise CassetteMismatch(f"cassette file is empty: {path}")
        header = json.loads(lines[0])
        if header.get("format_version") != CASSETTE_FORMAT_VERSION:
            raise CassetteMismatch(
                f"unsupported cassette format_version: {header.get('format_version')!r}"
            )
        cassette = cls(BackendRole(header["role"]), mode, meta=header.get("meta"))
        for line in lines[1:]:
            if line.strip():
                record = json.loads(line)
                cassette._records.append((record["digest"], record["response"]))
        return cassette


def _recorded_name(cassette: Cassette) -> str:
    return cassette.meta.get("backend", "recording")


class CassetteChat:
    def __init__(self, cassette: Cassette, inner: Optional[ChatBackend] = None):
        self._cassette = cassette
        self._inner = inner
        if cassette.mode is CassetteMode.REPLAY:
            self.backend_id = BackendId(BackendRole.CHAT, "replay", _recorded_name(cassette))
            self.provenance = Provenance.FIXTURE
        else:
            if inner is None:
                raise ValueError(f"{cassette.mode.value} mode needs a wrapped backend")
            cassette.meta.setdefault("backend", str(inner.backend_id))
            self.backend_id = inner.backend_id
            self.provenance = inner.provenance

    def chat(self, messages: Sequence[ChatMessage]) -> str:
        digest = digest_chat(messages)
        if self._cassette.mode is CassetteMode.REPLAY:
            return str(self._cassette.next_response(digest))
        response = self._inner.chat(messages)
        if self._cassette.mode is CassetteMode.RECORD:
            self._cassette.append(digest, response)
        return response


class CassetteEmbed:
    def __init__(self, cassette: Cassette, inner: Optional[EmbedBackend] = None):
        self._cassette = cassette
        self._inner = inner
        if cassette.mode is CassetteMode.REPLAY:
            if "dim" not in cassette.meta:
                raise CassetteMismatch("embed cassette lacks a recorded dim")
            self.dim = int(cassette.meta["dim"])
            self.backend_id = BackendId(BackendRole.EMBED, "replay", _recorded_name(cassette))
        else:
            if inner is None:
                raise ValueError(f"{cassette.mode.value} mode needs a wrapped backend")
            cassette.meta.setdefault("backend", str(inner.backend_id))
            cassette.meta.setdefault("dim", inner.dim)
            self.dim = inner.dim
            self.backend_id = inner.backend_id

    def embed(self, text: str) -> Vector:
        digest = digest_embed(text)
        if self._cassette.mode is CassetteMode.REPLAY:
            components = self._cassette.next_response(digest)
            vector = Vector(tuple(float(c) for c in components))
        else:
            vector = self._inner.embed(text)
            if self._cassette.mode is CassetteMode.RECORD:
                self._cassette.append(digest, list(vector.components))
        if vector.dim != self.dim:
            raise DimensionDrift(f"embedding has dim {vector.dim}, advertised {self.dim}")
        return vector


def _box_to_record(box: BoundingBox) -> dict:
    return {
        "box": [box.x_min, box.y_min, box.x_max, box.y_max],
        "label": box.label,
        "score": box.score,
    }


def _box_from_record(record: dict) -> BoundingBox:
    x0, y0, x1, y1 = record["box"]
    return BoundingBox(
        x_min=x0, y_min=y0, x_max=x1, y_max=y1, label=record["label"], score=record["score"]
    )


class CassetteDetect:
    def __init__(self, cassette: Cassette, inner: Optional[DetectBackend] = None):
        self._cassette = cassette
        self._inner = inner
        if cassette.mode is CassetteMode.REPLAY:
            self.backend_id = BackendId(BackendRole.DETECT, "replay", _recorded_name(cassette))
        else:
            if inner is None:
                raise ValueError(f"{cassette.mode.value} mode needs a wrapped backend")
            cassette.meta.setdefault("backend", str(inner.backend_id))
            self.backend_id = inner.backend_id

    def detect(self, image: ImageRef, label: str) -> tuple[BoundingBox, ...]:
        digest = digest_detect(image, label)
        if self._cassette.mode is CassetteMode.REPLAY:
            records = self._cassette.next_response(digest)
            return tuple(_box_from_record(r) for r in records)
        boxes = self._inner.detect(image, label)
        if self._cassette.mode is CassetteMode.RECORD:
            self._cassette.append(digest, [_box_to_record(b) for b in boxes])
        return boxes


class CassetteDepth:
    def __init__(self, cassette: Cassette, inner: Optional[DepthBackend] = None):
        self._cassette = cassette
        self._inner = inner
        if cassette.mode is CassetteMode.REPLAY:
            self.backend_id = BackendId(BackendRole.DEPTH, "replay", _recorded_name(cassette))
        else:
            if inner is None:
                raise ValueError(f"{cassette.mode.value} mode needs a wrapped backend")
            cassette.meta.setdefault("backend", str(inner.backend_id))
            self.backend_id = inner.backend_id

    def estimate_depth(self, image: ImageRef) -> np.ndarray:
        digest = digest_depth(image)
        if self._cassette.mode is CassetteMode.REPLAY:
            record = self._cassette.next_response(digest)
            values = np.array(record["values"], dtype=np.float64)
            if values.shape != (record["height"], record["width"]):
                raise CassetteMismatch("recorded depth map shape disagrees with its header")
            return values
        depth_map = self._inner.estimate_depth(image)
        if self._cassette.mode is CassetteMode.RECORD:
            h, w = depth_map.shape
            self._cassette.append(
                digest, {"width": w, "height": h, "values": depth_map.tolist()}
            )
        return depth_map
