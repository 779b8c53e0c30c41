"""The thought/action/observation loop that drives captioning.

Each step sends the full history to the planner backend, parses the reply's
Action line under the action grammar, executes it against the tool registry,
and feeds the observation back. A finish is gated by the deterministic
constraint checks: a failing caption is rejected and the verification report
becomes the observation, so the planner can repair it. Judged dimensions are
never gated here; gating on a judge would make termination nondeterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Union

from .actions import FinalAnswer, ToolCall, parse_action, serialize_action
from .backends.base import ChatBackend, ChatMessage, DepthBackend, DetectBackend, EmbedBackend
from .constraints import ConstraintSpec, Verdict, VerificationReport, verify_deterministic
from .errors import (
    ArgumentMismatch,
    BackendError,
    CaptionSmithError,
    ParseError,
    UnknownTool,
)
from .model import (
    Caption,
    EvolvedInstruction,
    ImageRef,
    TerminationReason,
    Trace,
    TraceStep,
)
from .retrieval import ChainExample, VectorStore, assemble_prompt, top_n
from .tools import ToolContext, ToolRegistry, ToolSettings, registry_describe

MAX_STEPS_DEFAULT = 8
N_EXAMPLES_DEFAULT = 4

TRACE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class AgentConfig:
    max_steps: int = MAX_STEPS_DEFAULT
    n_examples: int = N_EXAMPLES_DEFAULT
    verify_before_finish: bool = True

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.n_examples < 1:
            raise ValueError("n_examples must be >= 1")


@dataclass
class RunDeps:
    """Everything one captioning run needs besides the instruction and image."""

    planner: ChatBackend
    registry: ToolRegistry
    tool_chat: ChatBackend
    detector: DetectBackend
    depth: DepthBackend
    embedder: EmbedBackend
    store: VectorStore
    examples: Mapping[str, ChainExample]
    config: AgentConfig = field(default_factory=AgentConfig)
    tool_settings: ToolSettings = field(default_factory=ToolSettings)
    base_system_prompt: Optional[str] = None
    query_text: Optional[str] = None  # retrieval query; defaults to the instruction text


def load_agent_prompt(registry: ToolRegistry) -> str:
    template = (
        resources.files("captionsmith").joinpath("assets/agent_prompt.txt").read_text("utf-8")
    )
    return template.format(tools=registry_describe(registry))


def parse_planner_reply(reply: str) -> tuple[str, str]:
    """Split a planner reply into (thought text, action text).

    The last line starting with ``Action:`` wins; everything before it is the
    thought, with a leading ``Thought:`` marker stripped.
    """
    lines = reply.split("\n")
    action_idx = None
    for i, line in enumerate(lines):
        if line.lstrip().startswith("Action:"):
            action_idx = i
    if action_idx is None:
        raise BackendError("planner reply has no Action line")
    action_text = lines[action_idx].lstrip()[len("Action:"):].strip()
    thought = "\n".join(lines[:action_idx]).strip()
    if thought.startswith("Thought:"):
        thought = thought[len("Thought:"):].strip()
    return thought, action_text


def execute(action: ToolCall, registry: ToolRegistry, ctx: ToolContext) -> str:
    """Run one tool call; every failure becomes an error observation.

    The loop never aborts on a bad call: the planner sees the failure text
    and can try something else.
    """
    try:
        return registry.dispatch(action, ctx)
    except UnknownTool:
        known = ", ".join(registry.names())
        return f"ERROR: unknown tool {action.tool_name!r}; available tools: {known}"
    except ArgumentMismatch as exc:
        return f"ERROR: {exc}"
    except Exception as exc:
        return f"ERROR: {action.tool_name}: {exc}"


def should_terminate(
    candidate: FinalAnswer, spec: ConstraintSpec, verify: bool = True
) -> tuple[bool, VerificationReport]:
    """Accept a finish iff the deterministic dimensions all pass."""
    report = verify_deterministic(Caption(candidate.caption_text), spec)
    if not verify:
        return True, report
    failed = any(r.verdict is Verdict.FAIL for r in report.results)
    return not failed, report


def _rejection_observation(report: VerificationReport) -> str:
    return "constraints not satisfied:\n" + report.render()


def select_examples(deps: RunDeps, query_text: str) -> list[ChainExample]:
    scored = top_n(deps.embedder.embed(query_text), deps.store, deps.config.n_examples)
    return [deps.examples[example_id] for example_id, _ in scored]


def run(instruction: EvolvedInstruction, image: ImageRef, deps: RunDeps) -> Trace:
    """Drive the loop until an accepted finish, the step budget, or an error."""
    base = deps.base_system_prompt or load_agent_prompt(deps.registry)
    selected = select_examples(deps, deps.query_text or instruction.text)
    system = assemble_prompt(base, selected)
    messages: list[ChatMessage] = [
        ChatMessage("system", system),
        ChatMessage("user", instruction.text, image=image),
    ]
    ctx = ToolContext(
        image=image,
        chat=deps.tool_chat,
        detector=deps.detector,
        depth=deps.depth,
        settings=deps.tool_settings,
    )

    steps: list[TraceStep] = []
    for index in range(deps.config.max_steps):
        try:
            reply = deps.planner.chat(tuple(messages))
            thought, action_text = parse_planner_reply(reply)
            action = parse_action(action_text)
        except (BackendError, ParseError) as exc:
            return Trace(
                steps=tuple(steps),
                terminated_reason=TerminationReason.ERROR,
                error=str(exc),
            )

        if isinstance(action, FinalAnswer):
            accepted, report = should_terminate(
                action, instruction.spec, verify=deps.config.verify_before_finish
            )
            if accepted:
                steps.append(TraceStep(index, thought, action, ""))
                return Trace(
                    steps=tuple(steps),
                    terminated_reason=TerminationReason.FINAL_ANSWER,
                    final_caption=Caption(action.caption_text),
                )
            observation = _rejection_observation(report)
        else:
            observation = execute(action, deps.registry, ctx)

        steps.append(TraceStep(index, thought, action, observation))
        messages.append(ChatMessage("assistant", reply))
        messages.append(ChatMessage("user", f"Observation: {observation}"))

    return Trace(steps=tuple(steps), terminated_reason=TerminationReason.STEP_BUDGET)


# --- trace files -----------------------------------------------------------------


def _dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def write_trace(
    path: Union[str, Path],
    trace: Trace,
    instruction_text: str,
    spec_block: str,
    config: AgentConfig,
    backend_ids: Mapping[str, str],
) -> None:
    """Line-delimited trace with stable field order, for byte-exact replays."""
    lines = [
        _dumps(
            {
                "kind": "header",
                "format_version": TRACE_FORMAT_VERSION,
                "instruction": instruction_text,
                "spec": spec_block,
                "config": {
                    "max_steps": config.max_steps,
                    "n_examples": config.n_examples,
                    "verify_before_finish": config.verify_before_finish,
                },
                "backends": dict(sorted(backend_ids.items())),
            }
        )
    ]
    for step in trace.steps:
        lines.append(
            _dumps(
                {
                    "kind": "step",
                    "index": step.index,
                    "thought": step.thought,
                    "action": serialize_action(step.action),
                    "observation": step.observation,
                }
            )
        )
    lines.append(
        _dumps(
            {
                "kind": "footer",
                "reason": trace.terminated_reason.value,
                "final_caption": trace.final_caption.text if trace.final_caption else None,
                "error": trace.error,
            }
        )
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_trace(path: Union[str, Path]) -> tuple[dict, Trace]:
    """Load a trace file back into (header dict, Trace)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise CaptionSmithError(f"trace file is empty: {path}")
    header = json.loads(lines[0])
    steps: list[TraceStep] = []
    footer: Optional[dict] = None
    for line in lines[1:]:
        record = json.loads(line)
        if record["kind"] == "step":
            steps.append(
                TraceStep(
                    index=record["index"],
                    thought=record["thought"],
                    action=parse_action(record["action"]),
                    observation=record["observation"],
                )
            )
        elif record["kind"] == "footer":
            footer = record
    if footer is None:
        raise CaptionSmithError(f"trace file has no footer: {path}")
    trace = Trace(
        steps=tuple(steps),
        terminated_reason=TerminationReason(footer["reason"]),
        final_caption=Caption(footer["final_caption"]) if footer["final_caption"] else None,
        error=footer.get("error"),
    )
    return header, trace
