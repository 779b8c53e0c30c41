"""Run configuration: one JSON file, flags override file, file overrides defaults.

Keys mirror the documented dotted paths (``backends.chat.endpoint``,
``search.api_key_env``, ...). API keys are referenced by environment-variable
name and never stored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

from .errors import SchemaError
from .tools import ToolSettings

MODES = ("fixture", "record", "replay")


@dataclass(frozen=True)
class RunConfig:
    mode: str = "fixture"
    retrieval_n: int = 4
    embed_dim: int = 16
    context_k: int = 5
    context_max_queries: int = 3
    use_context: bool = True
    max_steps: int = 8
    verify_before_finish: bool = True
    evolve_retries: int = 2
    tool_settings: ToolSettings = field(default_factory=ToolSettings)
    example_db: Optional[Path] = None
    index_path: Optional[Path] = None
    trace_dir: Path = Path("traces")
    cassette_dir: Optional[Path] = None
    scenario_dir: Optional[Path] = None
    backends: dict = field(default_factory=dict)
    search: dict = field(default_factory=dict)
    backend_provider: str = "fixture"  # inner provider for record/passthrough

    def __post_init__(self):
        if self.mode not in MODES:
            raise SchemaError(f"mode must be one of {', '.join(MODES)}, got {self.mode!r}")
        if self.backend_provider not in ("fixture", "http"):
            raise SchemaError("backends.provider must be fixture or http")

    def resolved_cassette_dir(self) -> Optional[Path]:
        if self.cassette_dir is not None:
            return self.cassette_dir
        if self.scenario_dir is not None:
            return self.scenario_dir / "cassettes"
        return None


def _path_or_none(value) -> Optional[Path]:
    return Path(value) if value else None


def config_from_dict(raw: dict) -> RunConfig:
    retrieval = raw.get("retrieval", {})
    context = raw.get("context", {})
    agent = raw.get("agent", {})
    evolve = raw.get("evolve", {})
    tools = raw.get("tools", {})
    paths = raw.get("paths", {})
    backends = raw.get("backends", {})
    try:
        return RunConfig(
            mode=raw.get("mode", "fixture"),
            retrieval_n=int(retrieval.get("n", 4)),
            embed_dim=int(retrieval.get("dim", 16)),
            context_k=int(context.get("k", 5)),
            context_max_queries=int(context.get("max_queries", 3)),
            use_context=bool(context.get("enabled", True)),
            max_steps=int(agent.get("max_steps", 8)),
            verify_before_finish=bool(agent.get("verify_before_finish", True)),
            evolve_retries=int(evolve.get("retries", 2)),
            tool_settings=ToolSettings(
                detect_threshold=float(tools.get("detect_threshold", 0.35)),
                vertical_separation=float(tools.get("vertical_separation", 0.10)),
                depth_relative_diff=float(tools.get("depth_relative_diff", 0.15)),
                expand_max_rounds=int(tools.get("expand_max_rounds", 5)),
                condense_retries=int(tools.get("condense_retries", 2)),
            ),
            example_db=_path_or_none(paths.get("example_db")),
            index_path=_path_or_none(paths.get("index")),
            trace_dir=Path(paths.get("trace_dir", "traces")),
            cassette_dir=_path_or_none(paths.get("cassette_dir")),
            scenario_dir=_path_or_none(paths.get("scenario_dir")),
            backends={k: v for k, v in backends.items() if k != "provider"},
            search=dict(raw.get("search", {})),
            backend_provider=backends.get("provider", "fixture"),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"bad config value: {exc}") from exc


def load_config(path: Optional[Union[str, Path]]) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise SchemaError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise SchemaError("config root must be a JSON object")
    return config_from_dict(raw)


def with_overrides(config: RunConfig, **overrides) -> RunConfig:
    """Apply non-None CLI overrides on top of a loaded config."""
    cleaned = {k: v for k, v in overrides.items() if v is not None}
    for key in ("example_db", "index_path", "trace_dir", "cassette_dir", "scenario_dir"):
        if key in cleaned:
            cleaned[key] = Path(cleaned[key])
    return replace(config, **cleaned)
