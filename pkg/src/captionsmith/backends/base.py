"""Backend interfaces for the four external model roles.

Every model dependency (chat/MLLM, text embedder, object detector, depth
estimator) sits behind one of these protocols, with three interchangeable
families of implementations: scripted fixtures, HTTP clients, and
record/replay cassettes. Requests are digested canonically (message list and
image bytes included) so a replayed session can insist on exact matches.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Optional, Protocol, Sequence

import numpy as np

from ..model import ImageRef, Provenance

if TYPE_CHECKING:
    from ..retrieval import Vector


class BackendRole(str, Enum):
    CHAT = "chat"
    EMBED = "embed"
    DETECT = "detect"
    DEPTH = "depth"


@dataclass(frozen=True)
class BackendId:
    """Identifies which model served a role; recorded into traces and indexes."""

    role: BackendRole
    provider: str
    model_name: str

    def __str__(self) -> str:
        return f"{self.role.value}:{self.provider}:{self.model_name}"


@dataclass(frozen=True)
class ChatMessage:
    role: str  # "system" | "user" | "assistant"
    text: str
    image: Optional[ImageRef] = None


@dataclass(frozen=True)
class BoundingBox:
    """A detection in normalized [0, 1] image coordinates."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    label: str
    score: float

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max", "score"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be within [0, 1], got {value}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("box must have positive width and height")

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)


class ChatBackend(Protocol):
    backend_id: BackendId
    provenance: Provenance

    def chat(self, messages: Sequence[ChatMessage]) -> str: ...


class EmbedBackend(Protocol):
    backend_id: BackendId
    dim: int

    def embed(self, text: str) -> "Vector": ...


class DetectBackend(Protocol):
    backend_id: BackendId

    def detect(self, image: ImageRef, label: str) -> tuple[BoundingBox, ...]: ...


class DepthBackend(Protocol):
    backend_id: BackendId

    def estimate_depth(self, image: ImageRef) -> np.ndarray:
        """H x W map of nonnegative relative depths; larger means farther."""
        ...


# --- request digests ----------------------------------------------------------


def _sha(payload: str) -> str:
    return "sha256:" + hashlib.sha256(payload.encode("utf-8")).hexdigest()


def digest_chat(messages: Sequence[ChatMessage]) -> str:
    serialized = [
        {
            "role": m.role,
            "text": m.text,
            "image": m.image.digest() if m.image is not None else None,
        }
        for m in messages
    ]
    return _sha(json.dumps(serialized, sort_keys=True, separators=(",", ":")))


def digest_embed(text: str) -> str:
    return _sha(json.dumps({"text": text}, sort_keys=True, separators=(",", ":")))


def digest_detect(image: ImageRef, label: str) -> str:
    payload = {"image": image.digest(), "label": label}
    return _sha(json.dumps(payload, sort_keys=True, separators=(",", ":")))


def digest_depth(image: ImageRef) -> str:
    return _sha(json.dumps({"image": image.digest()}, sort_keys=True, separators=(",", ":")))


def require_nonempty_messages(messages: Sequence[ChatMessage]) -> None:
    if not messages:
        raise ValueError("chat needs at least one message")


def require_nonempty_text(text: str, what: str) -> None:
    if not text:
        raise ValueError(f"{what} must be non-empty")
