"""Shared domain types: instructions, images, captions, and run traces.

All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Union

from .actions import FinalAnswer, ToolCall
from .constraints import ConstraintSpec, extract_constraint_block
from .textrules import word_count


class MediaKind(str, Enum):
    PNG = "png"
    JPEG = "jpeg"


_MAGIC = {
    MediaKind.PNG: b"\x89PNG\r\n\x1a\n",
    MediaKind.JPEG: b"\xff\xd8\xff",
}


def sniff_media_kind(data: bytes) -> MediaKind:
    for kind, magic in _MAGIC.items():
        if data.startswith(magic):
            return kind
    raise ValueError("image payload is neither PNG nor JPEG")


@dataclass(frozen=True)
class ImageRef:
    """An image by local path or in-memory payload, never both."""

    media_kind: MediaKind
    path: Optional[Path] = None
    data: Optional[bytes] = None

    def __post_init__(self):
        if (self.path is None) == (self.data is None):
            raise ValueError("exactly one of path/data must be set")
        if self.data is not None:
            if not self.data:
                raise ValueError("image payload is empty")
            if sniff_media_kind(self.data) is not self.media_kind:
                raise ValueError(f"payload magic bytes do not match {self.media_kind.value}")

    @classmethod
    def from_bytes(cls, data: bytes) -> "ImageRef":
        return cls(media_kind=sniff_media_kind(data), data=data)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ImageRef":
        path = Path(path)
        data = path.read_bytes()
        if not data:
            raise ValueError(f"image file is empty: {path}")
        return cls(media_kind=sniff_media_kind(data), path=path)

    def payload(self) -> bytes:
        if self.data is not None:
            return self.data
        data = self.path.read_bytes()
        if not data:
            raise ValueError(f"image file is empty: {self.path}")
        if sniff_media_kind(data) is not self.media_kind:
            raise ValueError(f"payload magic bytes do not match {self.media_kind.value}")
        return data

    def digest(self) -> str:
        return hashlib.sha256(self.payload()).hexdigest()


@dataclass(frozen=True)
class Instruction:
    """The user's caption request and its image."""

    text: str
    image: ImageRef

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("instruction text is empty")


class Provenance(str, Enum):
    MODEL = "model"
    FIXTURE = "fixture"


@dataclass(frozen=True)
class EvolvedInstruction:
    """A professional instruction with its embedded, parsed constraint spec."""

    text: str
    spec: ConstraintSpec
    provenance: Provenance

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("evolved instruction text is empty")
        if self.spec.is_empty:
            raise ValueError("evolved instruction needs at least one constraint")
        if extract_constraint_block(self.text) != self.spec:
            raise ValueError("spec does not match the constraint block in the text")

    @classmethod
    def from_text(cls, text: str, provenance: Provenance) -> "EvolvedInstruction":
        return cls(text=text, spec=extract_constraint_block(text), provenance=provenance)


@dataclass(frozen=True)
class Caption:
    """Final or intermediate caption text."""

    text: str

    @property
    def word_count(self) -> int:
        return word_count(self.text)


class TerminationReason(str, Enum):
    FINAL_ANSWER = "final_answer"
    STEP_BUDGET = "step_budget"
    ERROR = "error"


@dataclass(frozen=True)
class TraceStep:
    """One thought/action/observation record.

    An accepted FinalAnswer has an empty observation; a rejected one carries
    the verification report it failed.
    """

    index: int
    thought: str
    action: Union[ToolCall, FinalAnswer]
    observation: str

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("step index must be nonnegative")


@dataclass(frozen=True)
class Trace:
    """The full record of one agent run."""

    steps: tuple[TraceStep, ...]
    terminated_reason: TerminationReason
    final_caption: Optional[Caption] = None
    error: Optional[str] = None

    def __post_init__(self):
        for position, step in enumerate(self.steps):
            if step.index != position:
                raise ValueError("trace step indices must be contiguous from 0")
        if (self.final_caption is not None) != (
            self.terminated_reason is TerminationReason.FINAL_ANSWER
        ):
            raise ValueError("final_caption is present iff the run ended in final_answer")
        for step in self.steps[:-1]:
            if isinstance(step.action, FinalAnswer) and not step.observation:
                raise ValueError("only the trailing accepted FinalAnswer may lack an observation")
