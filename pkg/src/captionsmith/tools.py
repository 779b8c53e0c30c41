"""Caption-control tools and the registry the planner dispatches through.

Six tools: visual question answering, sentiment rewriting, caption expansion
and condensation against exact length targets, object counting, and spatial
relation description from detections plus a depth map. Each is a pure
function over injected backends; the registry adapts them to parsed actions
and renders their one-line signatures into the planner prompt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .actions import Symbol, ToolCall
from .backends.base import (
    BoundingBox,
    ChatBackend,
    ChatMessage,
    DepthBackend,
    DetectBackend,
)
from .constraints import LengthConstraint, LengthUnit, Polarity
from .errors import ArgumentMismatch, BackendError, MalformedBackendOutput, UnknownTool
from .model import ImageRef
from .textrules import sentence_count, word_count

DETECT_THRESHOLD_DEFAULT = 0.35
VERTICAL_SEPARATION_DEFAULT = 0.10
DEPTH_RELATIVE_DIFF_DEFAULT = 0.15
EXPAND_MAX_ROUNDS_DEFAULT = 5
CONDENSE_RETRIES_DEFAULT = 2


@dataclass(frozen=True)
class ToolSettings:
    detect_threshold: float = DETECT_THRESHOLD_DEFAULT
    vertical_separation: float = VERTICAL_SEPARATION_DEFAULT
    depth_relative_diff: float = DEPTH_RELATIVE_DIFF_DEFAULT
    expand_max_rounds: int = EXPAND_MAX_ROUNDS_DEFAULT
    condense_retries: int = CONDENSE_RETRIES_DEFAULT


def _measure(text: str, unit: LengthUnit) -> int:
    return word_count(text) if unit is LengthUnit.WORDS else sentence_count(text)


# --- the six tools --------------------------------------------------------------

_VQA_SYSTEM = "You answer questions about the attached image, factually and concisely."


def vqa(image: ImageRef, question: str, backend: ChatBackend) -> str:
    """One chat call; the answer comes back verbatim."""
    if not question.strip():
        raise ValueError("question must be non-empty")
    return backend.chat(
        (ChatMessage("system", _VQA_SYSTEM), ChatMessage("user", question, image=image))
    )


_SENTIMENT_SYSTEM = (
    "You rewrite captions to a requested emotional tone while keeping every "
    "factual detail. Reply with the rewritten caption only."
)


def modify_sentiment(
    caption: str, sentiment: str, backend: ChatBackend, tone: Optional[str] = None
) -> str:
    """Rewrite ``caption`` with the given polarity (and optional tone text)."""
    if not caption.strip():
        raise ValueError("caption must be non-empty")
    try:
        polarity = Polarity(sentiment)
    except ValueError:
        allowed = ", ".join(p.value for p in Polarity)
        raise ValueError(
            f"sentiment must be one of {allowed}; pass nuance via the tone argument"
        ) from None
    wanted = polarity.value if tone is None else f"{polarity.value} ({tone})"
    reply = backend.chat(
        (
            ChatMessage("system", _SENTIMENT_SYSTEM),
            ChatMessage("user", f"Desired sentiment: {wanted}\n\nCaption:\n{caption}"),
        )
    ).strip()
    if not reply:
        raise MalformedBackendOutput("sentiment rewrite returned empty text")
    return reply


@dataclass(frozen=True)
class LengthAdjustResult:
    caption: str
    met: bool
    rounds: int


_ASK_SYSTEM = (
    "You ask exactly one short question about the attached image whose answer "
    "would add a detail missing from the caption so far. Reply with the question only."
)
_MERGE_SYSTEM = (
    "You weave a new fact into a caption, keeping it fluent and keeping every "
    "existing detail. Reply with the merged caption only."
)


def expand_caption(
    image: ImageRef,
    caption: str,
    target: LengthConstraint,
    backend: ChatBackend,
    max_rounds: int = EXPAND_MAX_ROUNDS_DEFAULT,
) -> LengthAdjustResult:
    """Grow the caption by asking and answering image questions.

    Each round asks one question, answers it against the image, and merges
    the answer in. Stops as soon as the minimum is reached; on a mid-loop
    backend failure the longest caption achieved so far comes back unmet.
    """
    if target.min is None:
        raise ValueError("expansion target needs a min bound")
    best = caption
    best_count = _measure(caption, target.unit)
    if best_count >= target.min:
        return LengthAdjustResult(caption, True, 0)
    rounds = 0
    current = caption
    try:
        while rounds < max_rounds:
            rounds += 1
            question = backend.chat(
                (
                    ChatMessage("system", _ASK_SYSTEM),
                    ChatMessage("user", f"Caption so far:\n{current}", image=image),
                )
            )
            answer = vqa(image, question, backend)
            current = backend.chat(
                (
                    ChatMessage("system", _MERGE_SYSTEM),
                    ChatMessage("user", f"Caption:\n{current}\n\nNew fact: {answer}"),
                )
            ).strip()
            count = _measure(current, target.unit)
            if count > best_count:
                best, best_count = current, count
            if best_count >= target.min:
                return LengthAdjustResult(best, True, rounds)
    except BackendError:
        return LengthAdjustResult(best, False, rounds)
    return LengthAdjustResult(best, False, rounds)


_CONDENSE_SYSTEM = (
    "You shorten captions, removing superfluous detail while keeping the "
    "essential content. Reply with the shortened caption only."
)


def condense_caption(
    caption: str,
    target: LengthConstraint,
    backend: ChatBackend,
    retries: int = CONDENSE_RETRIES_DEFAULT,
) -> LengthAdjustResult:
    """Shrink the caption to the max bound, re-checking and retrying."""
    if target.max is None:
        raise ValueError("condensation target needs a max bound")
    best = caption
    best_count = _measure(caption, target.unit)
    if best_count <= target.max:
        return LengthAdjustResult(caption, True, 0)
    attempts = 0
    for _ in range(retries + 1):
        attempts += 1
        reply = backend.chat(
            (
                ChatMessage("system", _CONDENSE_SYSTEM),
                ChatMessage(
                    "user", f"Shorten to at most {target.max} {target.unit.value}:\n{best}"
                ),
            )
        ).strip()
        if not reply:
            raise MalformedBackendOutput("condensation returned empty text")
        count = _measure(reply, target.unit)
        if count < best_count:
            best, best_count = reply, count
        if best_count <= target.max:
            return LengthAdjustResult(best, True, attempts)
    return LengthAdjustResult(best, False, attempts)


def count_objects(
    image: ImageRef,
    label: str,
    detector: DetectBackend,
    threshold: float = DETECT_THRESHOLD_DEFAULT,
) -> tuple[int, tuple[BoundingBox, ...]]:
    """Detections scoring at least ``threshold``; all boxes kept for the trace."""
    if not label.strip():
        raise ValueError("label must be non-empty")
    boxes = detector.detect(image, label)
    count = sum(1 for b in boxes if b.score >= threshold)
    return count, boxes


def _mean_depth(depth_map: np.ndarray, box: BoundingBox) -> float:
    h, w = depth_map.shape
    r0 = min(max(int(math.floor(box.y_min * h)), 0), h - 1)
    r1 = max(min(int(math.ceil(box.y_max * h)), h), r0 + 1)
    c0 = min(max(int(math.floor(box.x_min * w)), 0), w - 1)
    c1 = max(min(int(math.ceil(box.x_max * w)), w), c0 + 1)
    return float(depth_map[r0:r1, c0:c1].mean())


def spatial_relations(
    image: ImageRef,
    labels: Sequence[str],
    detector: DetectBackend,
    depth_backend: DepthBackend,
    settings: Optional[ToolSettings] = None,
) -> str:
    """Deterministic left/right, above/below, nearer/farther sentences.

    One box per label (the highest-scoring detection); labels without any
    detection are reported absent rather than raised. Vertical separation
    below 10% of image height and depth differences below 15% (relative to
    the farther mean) emit nothing.
    """
    settings = settings or ToolSettings()
    if len(labels) < 2:
        raise ValueError("need at least two labels to relate")
    depth_map = depth_backend.estimate_depth(image)

    chosen: list[tuple[str, Optional[BoundingBox]]] = []
    for label in labels:
        boxes = detector.detect(image, label)
        best = max(boxes, key=lambda b: b.score) if boxes else None
        chosen.append((label, best))

    sentences: list[str] = []
    for label, box in chosen:
        if box is None:
            sentences.append(f"No {label} detected.")
    present = [(label, box) for label, box in chosen if box is not None]
    for i in range(len(present)):
        for j in range(i + 1, len(present)):
            label_a, box_a = present[i]
            label_b, box_b = present[j]
            ax, ay = box_a.center
            bx, by = box_b.center
            if ax < bx:
                sentences.append(f"The {label_a} is left of the {label_b}.")
            elif ax > bx:
                sentences.append(f"The {label_a} is right of the {label_b}.")
            if abs(ay - by) > settings.vertical_separation:
                if ay < by:
                    sentences.append(f"The {label_a} is above the {label_b}.")
                else:
                    sentences.append(f"The {label_a} is below the {label_b}.")
            depth_a = _mean_depth(depth_map, box_a)
            depth_b = _mean_depth(depth_map, box_b)
            farther = max(depth_a, depth_b)
            if farther > 0 and abs(depth_a - depth_b) / farther > settings.depth_relative_diff:
                if depth_a < depth_b:
                    sentences.append(f"The {label_a} is nearer than the {label_b}.")
                else:
                    sentences.append(f"The {label_a} is farther than the {label_b}.")
    return " ".join(sentences)


# --- registry ---------------------------------------------------------------------


@dataclass(frozen=True)
class ToolDescriptor:
    name: str
    summary: str
    args: tuple[tuple[str, str, bool], ...]  # (name, type, required)
    returns: str

    def __post_init__(self):
        arg_names = [a[0] for a in self.args]
        if len(arg_names) != len(set(arg_names)):
            raise ValueError(f"duplicate argument names in descriptor {self.name!r}")
        for _, type_name, _ in self.args:
            if type_name not in ("string", "integer", "identifier"):
                raise ValueError(f"unknown argument type {type_name!r}")


@dataclass
class ToolContext:
    """Everything a tool may touch during one agent run."""

    image: ImageRef
    chat: ChatBackend
    detector: DetectBackend
    depth: DepthBackend
    settings: ToolSettings = field(default_factory=ToolSettings)


Handler = Callable[[ToolContext, dict], str]


class ToolRegistry:
    def __init__(self):
        self._tools: dict[str, tuple[ToolDescriptor, Handler]] = {}

    def register(self, descriptor: ToolDescriptor, handler: Handler) -> None:
        if descriptor.name in self._tools:
            raise ValueError(f"tool {descriptor.name!r} is already registered")
        self._tools[descriptor.name] = (descriptor, handler)

    def __contains__(self, name: str) -> bool:
        return name in self._tools

    def __len__(self) -> int:
        return len(self._tools)

    def names(self) -> list[str]:
        return sorted(self._tools)

    def descriptor(self, name: str) -> ToolDescriptor:
        if name not in self._tools:
            raise UnknownTool(f"unknown tool {name!r}")
        return self._tools[name][0]

    def dispatch(self, call: ToolCall, ctx: ToolContext) -> str:
        """Run a parsed call; argument problems raise, tool output returns."""
        if call.tool_name not in self._tools:
            raise UnknownTool(f"unknown tool {call.tool_name!r}")
        descriptor, handler = self._tools[call.tool_name]
        args = _coerce_args(descriptor, call)
        return handler(ctx, args)


_PLACEHOLDERS = {"string": '"..."', "integer": "0", "identifier": "value"}


def registry_describe(registry: ToolRegistry) -> str:
    """One parseable call skeleton per tool, name-sorted."""
    lines = []
    for name in registry.names():
        descriptor = registry.descriptor(name)
        rendered = ", ".join(f"{a}={_PLACEHOLDERS[t]}" for a, t, _ in descriptor.args)
        lines.append(f"call {name}({rendered}) -- {descriptor.summary}")
    return "\n".join(lines)


def _coerce_args(descriptor: ToolDescriptor, call: ToolCall) -> dict:
    declared = {name: (type_name, required) for name, type_name, required in descriptor.args}
    values = {}
    for name, value in call.args:
        if name not in declared:
            raise ArgumentMismatch(f"{call.tool_name} got unexpected argument {name!r}")
        type_name, _ = declared[name]
        if type_name == "string":
            values[name] = value.name if isinstance(value, Symbol) else value
            if not isinstance(values[name], str):
                raise ArgumentMismatch(f"{call.tool_name} argument {name!r} must be a string")
        elif type_name == "integer":
            if not isinstance(value, int):
                raise ArgumentMismatch(f"{call.tool_name} argument {name!r} must be an integer")
            values[name] = value
        else:  # identifier
            if isinstance(value, Symbol):
                values[name] = value.name
            elif isinstance(value, str):
                values[name] = value
            else:
                raise ArgumentMismatch(f"{call.tool_name} argument {name!r} must be an identifier")
    for name, (_, required) in declared.items():
        if required and name not in values:
            raise ArgumentMismatch(f"{call.tool_name} is missing required argument {name!r}")
    return values


def _unit_from(args: dict) -> LengthUnit:
    unit = args.get("unit", "words")
    try:
        return LengthUnit(unit)
    except ValueError:
        raise ArgumentMismatch("unit must be words or sentences") from None


def _format_boxes(boxes: Sequence[BoundingBox]) -> str:
    if not boxes:
        return "none"
    return "; ".join(
        f"({b.x_min:.3f},{b.y_min:.3f},{b.x_max:.3f},{b.y_max:.3f})@{b.score:.2f}" for b in boxes
    )


def _adjust_note(result: LengthAdjustResult, target: LengthConstraint) -> str:
    unit = target.unit.value
    bound = f"min {target.min}" if target.min is not None else f"max {target.max}"
    status = "met" if result.met else "not met"
    count = _measure(result.caption, target.unit)
    return f"[length {bound} {unit} {status}; now {count} {unit}; rounds used: {result.rounds}]"


def _vqa_handler(ctx: ToolContext, args: dict) -> str:
    return vqa(ctx.image, args["question"], ctx.chat)


def _sentiment_handler(ctx: ToolContext, args: dict) -> str:
    return modify_sentiment(args["caption"], args["sentiment"], ctx.chat, tone=args.get("tone"))


def _expand_handler(ctx: ToolContext, args: dict) -> str:
    target = LengthConstraint(unit=_unit_from(args), min=args["target"])
    result = expand_caption(
        ctx.image, args["caption"], target, ctx.chat, max_rounds=ctx.settings.expand_max_rounds
    )
    return f"{result.caption}\n{_adjust_note(result, target)}"


def _condense_handler(ctx: ToolContext, args: dict) -> str:
    target = LengthConstraint(unit=_unit_from(args), max=args["target"])
    result = condense_caption(
        args["caption"], target, ctx.chat, retries=ctx.settings.condense_retries
    )
    return f"{result.caption}\n{_adjust_note(result, target)}"


def _count_handler(ctx: ToolContext, args: dict) -> str:
    count, boxes = count_objects(
        ctx.image, args["label"], ctx.detector, threshold=ctx.settings.detect_threshold
    )
    return (
        f"count={count} for label '{args['label']}' "
        f"(threshold {ctx.settings.detect_threshold:g}); boxes: {_format_boxes(boxes)}"
    )


def _spatial_handler(ctx: ToolContext, args: dict) -> str:
    labels = [part.strip() for part in args["labels"].split(",") if part.strip()]
    return spatial_relations(ctx.image, labels, ctx.detector, ctx.depth, ctx.settings)


def build_standard_registry() -> ToolRegistry:
    """The six standard tools, each registered exactly once."""
    registry = ToolRegistry()
    registry.register(
        ToolDescriptor(
            name="vqa",
            summary="Answer a question about the image.",
            args=(("question", "string", True),),
            returns="the answer text",
        ),
        _vqa_handler,
    )
    registry.register(
        ToolDescriptor(
            name="modify_sentiment",
            summary="Rewrite the caption with the given sentiment (positive, negative, or neutral), keeping its content; optional tone refines it.",
            args=(
                ("caption", "string", True),
                ("sentiment", "identifier", True),
                ("tone", "string", False),
            ),
            returns="the rewritten caption",
        ),
        _sentiment_handler,
    )
    registry.register(
        ToolDescriptor(
            name="expand_caption",
            summary="Lengthen the caption with image details until it reaches at least the target length (unit defaults to words).",
            args=(
                ("caption", "string", True),
                ("target", "integer", True),
                ("unit", "identifier", False),
            ),
            returns="the expanded caption and a met/unmet note",
        ),
        _expand_handler,
    )
    registry.register(
        ToolDescriptor(
            name="condense_caption",
            summary="Shorten the caption to at most the target length (unit defaults to words).",
            args=(
                ("caption", "string", True),
                ("target", "integer", True),
                ("unit", "identifier", False),
            ),
            returns="the condensed caption and a met/unmet note",
        ),
        _condense_handler,
    )
    registry.register(
        ToolDescriptor(
            name="count_objects",
            summary="Count objects matching the label in the image.",
            args=(("label", "string", True),),
            returns="the count and the detected boxes",
        ),
        _count_handler,
    )
    registry.register(
        ToolDescriptor(
            name="spatial_relations",
            summary="Describe left/right, above/below, and nearer/farther relations among the comma-separated labels.",
            args=(("labels", "string", True),),
            returns="relation sentences",
        ),
        _spatial_handler,
    )
    return registry
