"""Controllable image captioning: evolve the instruction, then satisfy it.

A simple caption request is rewritten into a professional instruction with a
machine-checkable constraint block, optionally grounded in web context for
the pictured subject. A planning loop then drives caption-control tools
(question answering, sentiment rewriting, length adjustment, object counting,
spatial relations) until the caption verifies against the constraints. Every
model and web dependency sits behind replayable backends, so the whole
pipeline runs offline from fixtures and cassettes.
"""

from .actions import FinalAnswer, Symbol, ToolCall, parse_action, serialize_action
from .agent import AgentConfig, RunDeps, execute, run, should_terminate, write_trace
from .constraints import (
    CaptionFormat,
    ConstraintSpec,
    DimensionResult,
    InheritanceResult,
    LengthConstraint,
    LengthUnit,
    Polarity,
    SentimentSpec,
    Verdict,
    VerificationReport,
    check_inheritance,
    extract_constraint_block,
    render_constraint_block,
    verify_deterministic,
    verify_judged,
)
from .context import ContextBundle, SearchResult, WebImageHit, build_context
from .evolver import CriteriaReport, evolve, extract_user_spec, validate_evolution
from .model import (
    Caption,
    EvolvedInstruction,
    ImageRef,
    Instruction,
    MediaKind,
    Provenance,
    TerminationReason,
    Trace,
    TraceStep,
)
from .retrieval import (
    ChainExample,
    Vector,
    VectorStore,
    assemble_prompt,
    build_index,
    cosine_similarity,
    top_n,
)
from .textrules import sentence_count, word_count
from .tools import (
    ToolDescriptor,
    ToolRegistry,
    build_standard_registry,
    condense_caption,
    count_objects,
    expand_caption,
    modify_sentiment,
    registry_describe,
    spatial_relations,
    vqa,
)

__version__ = "0.1.0"

__all__ = [
    "AgentConfig",
    "Caption",
    "CaptionFormat",
    "ChainExample",
    "ConstraintSpec",
    "ContextBundle",
    "CriteriaReport",
    "DimensionResult",
    "EvolvedInstruction",
    "FinalAnswer",
    "ImageRef",
    "InheritanceResult",
    "Instruction",
    "LengthConstraint",
    "LengthUnit",
    "MediaKind",
    "Polarity",
    "Provenance",
    "RunDeps",
    "SearchResult",
    "SentimentSpec",
    "Symbol",
    "TerminationReason",
    "ToolCall",
    "ToolDescriptor",
    "ToolRegistry",
    "Trace",
    "TraceStep",
    "Vector",
    "VectorStore",
    "Verdict",
    "VerificationReport",
    "WebImageHit",
    "assemble_prompt",
    "build_context",
    "build_index",
    "build_standard_registry",
    "check_inheritance",
    "condense_caption",
    "cosine_similarity",
    "count_objects",
    "evolve",
    "execute",
    "expand_caption",
    "extract_constraint_block",
    "extract_user_spec",
    "modify_sentiment",
    "parse_action",
    "registry_describe",
    "render_constraint_block",
    "run",
    "sentence_count",
    "serialize_action",
    "should_terminate",
    "spatial_relations",
    "top_n",
    "validate_evolution",
    "verify_deterministic",
    "verify_judged",
    "vqa",
    "word_count",
    "write_trace",
]
