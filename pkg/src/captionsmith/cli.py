"""Command-line surface: evolve, caption, index, verify, and replay.

Exit codes are a stable contract: 0 success, 1 constraint failure,
2 input/parse error, 3 budget or backend failure. Every command accepts
``--mode fixture|record|replay``; fixture and replay run fully offline.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from . import agent as agent_mod
from . import context as context_mod
from . import evolver as evolver_mod
from .backends import (
    Cassette,
    CassetteChat,
    CassetteDepth,
    CassetteDetect,
    CassetteEmbed,
    CassetteMode,
    HashEmbedder,
    HttpChat,
    HttpDepth,
    HttpDetect,
    HttpEmbed,
    ScriptedChat,
    UnavailableDepth,
    UnavailableDetector,
    load_chat_script,
    load_depth_map,
    load_detections,
)
from .backends.base import BackendRole
from .config import RunConfig, load_config, with_overrides
from .constraints import extract_constraint_block, render_constraint_block, verify_deterministic, verify_judged
from .errors import (
    BackendError,
    CaptionSmithError,
    EvolveFailed,
    MalformedBlock,
    MissingBlock,
    ParseError,
    SchemaError,
)
from .model import Caption, ImageRef, Instruction, TerminationReason
from .retrieval import build_index, load_examples, load_store, save_store
from .tools import build_standard_registry

EXIT_OK = 0
EXIT_CONSTRAINT = 1
EXIT_INPUT = 2
EXIT_BACKEND = 3

CHAT_ROLES = ("evolver", "summarizer", "planner", "toolchat", "judge")


def _fail(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)


# --- session wiring ---------------------------------------------------------------


@dataclass
class Session:
    """Backends and clients for one command invocation, wired per mode."""

    config: RunConfig
    chats: dict = field(default_factory=dict)  # role name -> ChatBackend
    embedder: object = None
    detector: object = None
    depth: object = None
    image_client: object = None
    text_client: object = None
    cassettes: dict = field(default_factory=dict)  # file stem -> Cassette (record mode)
    context_snapshot: Optional[context_mod.ContextBundle] = None

    def chat(self, role: str):
        return self.chats[role]

    def backend_ids(self) -> dict[str, str]:
        ids = {role: str(backend.backend_id) for role, backend in self.chats.items()}
        ids["embed"] = str(self.embedder.backend_id)
        ids["detect"] = str(self.detector.backend_id)
        ids["depth"] = str(self.depth.backend_id)
        return ids

    def save_recordings(self) -> None:
        cassette_dir = self.config.resolved_cassette_dir()
        if self.config.mode != "record" or cassette_dir is None:
            return
        for stem, cassette in self.cassettes.items():
            cassette.save(cassette_dir / f"{stem}.jsonl")


def _fixture_chat(scenario: Optional[Path], role: str):
    if scenario is not None:
        script = scenario / "scripts" / f"{role}.jsonl"
        if script.is_file():
            return load_chat_script(script, name=role)
    return ScriptedChat([], name=role)


def _fixture_detector(scenario: Optional[Path]):
    if scenario is not None and (scenario / "detections.json").is_file():
        return load_detections(scenario / "detections.json")
    return UnavailableDetector()


def _fixture_depth(scenario: Optional[Path]):
    if scenario is not None and (scenario / "depth.json").is_file():
        return load_depth_map(scenario / "depth.json")
    return UnavailableDepth()


def _fixture_search_clients(scenario: Optional[Path]):
    image_client = context_mod.EmptyImageSearch()
    text_client = context_mod.FixtureTextSearch({})
    if scenario is not None:
        hits_file = scenario / "context" / "image_hits.json"
        if hits_file.is_file():
            image_client = context_mod.FixtureImageSearch.from_file(hits_file)
        text_client = context_mod.FixtureTextSearch.from_dir(scenario / "context" / "searches")
    return image_client, text_client


def _http_chat(config: RunConfig):
    chat_cfg = config.backends.get("chat", {})
    if "endpoint" not in chat_cfg or "model" not in chat_cfg:
        raise SchemaError("backends.chat.endpoint and backends.chat.model are required for http")
    return lambda: HttpChat(
        endpoint=chat_cfg["endpoint"],
        model=chat_cfg["model"],
        api_key_env=chat_cfg.get("api_key_env"),
    )


def _inner_backends(config: RunConfig):
    """Backends to wrap when recording: fixture scripts or HTTP clients."""
    scenario = config.scenario_dir
    if config.backend_provider == "fixture":
        chats = {role: _fixture_chat(scenario, role) for role in CHAT_ROLES}
        return (
            chats,
            HashEmbedder(config.embed_dim),
            _fixture_detector(scenario),
            _fixture_depth(scenario),
        )
    make_chat = _http_chat(config)
    chats = {role: make_chat() for role in CHAT_ROLES}
    embed_cfg = config.backends.get("embed", {})
    detect_cfg = config.backends.get("detect", {})
    depth_cfg = config.backends.get("depth", {})
    embedder = (
        HttpEmbed(
            endpoint=embed_cfg["endpoint"],
            model=embed_cfg["model"],
            dim=int(embed_cfg.get("dim", config.embed_dim)),
            api_key_env=embed_cfg.get("api_key_env"),
        )
        if embed_cfg
        else HashEmbedder(config.embed_dim)
    )
    detector = (
        HttpDetect(
            endpoint=detect_cfg["endpoint"],
            model=detect_cfg.get("model", "detector"),
            api_key_env=detect_cfg.get("api_key_env"),
        )
        if detect_cfg
        else _fixture_detector(config.scenario_dir)
    )
    depth = (
        HttpDepth(
            endpoint=depth_cfg["endpoint"],
            model=depth_cfg.get("model", "depth"),
            api_key_env=depth_cfg.get("api_key_env"),
        )
        if depth_cfg
        else _fixture_depth(config.scenario_dir)
    )
    return chats, embedder, detector, depth


def build_session(config: RunConfig) -> Session:
    scenario = config.scenario_dir
    session = Session(config=config)
    session.image_client, session.text_client = _fixture_search_clients(scenario)

    if config.mode == "fixture":
        session.chats = {role: _fixture_chat(scenario, role) for role in CHAT_ROLES}
        session.embedder = HashEmbedder(config.embed_dim)
        session.detector = _fixture_detector(scenario)
        session.depth = _fixture_depth(scenario)
        return session

    cassette_dir = config.resolved_cassette_dir()
    if cassette_dir is None:
        raise SchemaError(f"{config.mode} mode needs paths.cassette_dir or a scenario dir")

    if config.mode == "record":
        chats, embedder, detector, depth = _inner_backends(config)
        for role in CHAT_ROLES:
            cassette = Cassette(BackendRole.CHAT, CassetteMode.RECORD)
            session.cassettes[role] = cassette
            session.chats[role] = CassetteChat(cassette, chats[role])
        embed_cassette = Cassette(BackendRole.EMBED, CassetteMode.RECORD)
        detect_cassette = Cassette(BackendRole.DETECT, CassetteMode.RECORD)
        depth_cassette = Cassette(BackendRole.DEPTH, CassetteMode.RECORD)
        session.cassettes.update(
            {"embed": embed_cassette, "detect": detect_cassette, "depth": depth_cassette}
        )
        session.embedder = CassetteEmbed(embed_cassette, embedder)
        session.detector = CassetteDetect(detect_cassette, detector)
        session.depth = CassetteDepth(depth_cassette, depth)
        if config.backend_provider == "http" and config.search.get("endpoint"):
            session.image_client = context_mod.HttpImageSearch(
                config.search["endpoint"], config.search.get("api_key_env")
            )
            if config.search.get("text_endpoint"):
                session.text_client = context_mod.HttpTextSearch(
                    config.search["text_endpoint"], config.search.get("api_key_env")
                )
        return session

    # replay
    for role in CHAT_ROLES:
        path = cassette_dir / f"{role}.jsonl"
        if path.is_file():
            session.chats[role] = CassetteChat(Cassette.load(path))
        else:
            session.chats[role] = ScriptedChat([], name=f"{role}-missing-cassette")
    embed_path = cassette_dir / "embed.jsonl"
    session.embedder = (
        CassetteEmbed(Cassette.load(embed_path))
        if embed_path.is_file()
        else HashEmbedder(config.embed_dim)
    )
    detect_path = cassette_dir / "detect.jsonl"
    session.detector = (
        CassetteDetect(Cassette.load(detect_path))
        if detect_path.is_file()
        else _fixture_detector(scenario)
    )
    depth_path = cassette_dir / "depth.jsonl"
    session.depth = (
        CassetteDepth(Cassette.load(depth_path))
        if depth_path.is_file()
        else _fixture_depth(scenario)
    )
    snapshot = cassette_dir / "context.json"
    if snapshot.is_file():
        session.context_snapshot = context_mod.bundle_from_dict(
            json.loads(snapshot.read_text(encoding="utf-8"))
        )
    return session


def build_run_context(
    session: Session, image: ImageRef, instruction_text: str
) -> context_mod.ContextBundle:
    config = session.config
    if not config.use_context:
        return context_mod.ContextBundle.empty()
    if session.context_snapshot is not None:
        return session.context_snapshot
    bundle = context_mod.build_context(
        image,
        instruction_text,
        session.image_client,
        session.text_client,
        session.chat("summarizer"),
        context_mod.ContextSettings(k=config.context_k, max_queries=config.context_max_queries),
    )
    if config.mode == "record":
        cassette_dir = config.resolved_cassette_dir()
        cassette_dir.mkdir(parents=True, exist_ok=True)
        (cassette_dir / "context.json").write_text(
            json.dumps(context_mod.bundle_to_dict(bundle), sort_keys=True, indent=1) + "\n",
            encoding="utf-8",
        )
    return bundle


def default_example_db() -> Path:
    return Path(str(resources.files("captionsmith").joinpath("assets/seed_examples.jsonl")))


def build_agent_deps(session: Session) -> agent_mod.RunDeps:
    config = session.config
    loaded = load_examples(config.example_db or default_example_db())
    if config.index_path is not None and Path(config.index_path).is_file():
        store = load_store(config.index_path)
    else:
        store = build_index(loaded, session.embedder)
    return agent_mod.RunDeps(
        planner=session.chat("planner"),
        registry=build_standard_registry(),
        tool_chat=session.chat("toolchat"),
        detector=session.detector,
        depth=session.depth,
        embedder=session.embedder,
        store=store,
        examples={ex.id: ex for ex in loaded},
        config=agent_mod.AgentConfig(
            max_steps=config.max_steps,
            n_examples=config.retrieval_n,
            verify_before_finish=config.verify_before_finish,
        ),
        tool_settings=config.tool_settings,
    )


# --- scenario bundles ---------------------------------------------------------------


def load_scenario(scenario_dir: Path) -> dict:
    manifest = scenario_dir / "scenario.json"
    if not manifest.is_file():
        raise SchemaError(f"no scenario.json in {scenario_dir}")
    raw = json.loads(manifest.read_text(encoding="utf-8"))
    for key in ("instruction", "image"):
        if key not in raw:
            raise SchemaError(f"scenario.json is missing field '{key}'")
    return raw


# --- commands -----------------------------------------------------------------------


def _resolve_inputs(args, config: RunConfig) -> tuple[str, ImageRef, RunConfig]:
    """Instruction and image from flags, falling back to the scenario manifest."""
    instruction_text = getattr(args, "instruction", None)
    image_path = getattr(args, "image", None)
    if config.scenario_dir is not None and (instruction_text is None or image_path is None):
        manifest = load_scenario(config.scenario_dir)
        if instruction_text is None:
            instruction_text = manifest["instruction"]
        if image_path is None:
            image_path = config.scenario_dir / manifest["image"]
        if "use_context" in manifest and not getattr(args, "no_context", False):
            config = with_overrides(config, use_context=bool(manifest["use_context"]))
    if instruction_text is None or image_path is None:
        raise SchemaError("need --instruction and --image (or --scenario with a manifest)")
    image = ImageRef.from_file(image_path)
    return instruction_text, image, config


def _common_config(args) -> RunConfig:
    config = load_config(getattr(args, "config", None))
    overrides = {}
    if getattr(args, "mode", None):
        overrides["mode"] = args.mode
    if getattr(args, "scenario", None):
        overrides["scenario_dir"] = args.scenario
    if getattr(args, "trace_dir", None):
        overrides["trace_dir"] = args.trace_dir
    if getattr(args, "no_context", False):
        overrides["use_context"] = False
    if getattr(args, "example_db", None):
        overrides["example_db"] = args.example_db
    config = with_overrides(config, **overrides)
    return config


def cmd_evolve(args) -> int:
    config = _common_config(args)
    try:
        instruction_text, image, config = _resolve_inputs(args, config)
        session = build_session(config)
        instruction = Instruction(text=instruction_text, image=image)
        bundle = build_run_context(session, image, instruction_text)
        prompt_messages = evolver_mod.build_evolver_messages(instruction, bundle)
        evolved = evolver_mod.evolve(
            instruction, bundle, session.chat("evolver"), retries=config.evolve_retries
        )
        user_spec = evolver_mod.extract_user_spec(instruction_text)
        report = evolver_mod.validate_evolution(
            instruction, user_spec, evolved, session.chat("judge")
        )
    except (FileNotFoundError, SchemaError, ValueError) as exc:
        _fail(str(exc))
        return EXIT_INPUT
    except EvolveFailed as exc:
        _fail(f"evolve failed: {exc}")
        return EXIT_INPUT
    except (BackendError, CaptionSmithError) as exc:
        _fail(str(exc))
        return EXIT_BACKEND

    trace_record = {
        "prompt": [{"role": m.role, "text": m.text} for m in prompt_messages],
        "evolved": evolved.text,
        "provenance": evolved.provenance.value,
        "criteria": report.render(),
        "context_log": list(bundle.log),
    }
    config.trace_dir.mkdir(parents=True, exist_ok=True)
    (config.trace_dir / "evolve_trace.json").write_text(
        json.dumps(trace_record, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )
    session.save_recordings()
    print(evolved.text)
    print()
    print(report.render())
    return EXIT_OK


def cmd_caption(args) -> int:
    config = _common_config(args)
    try:
        instruction_text, image, config = _resolve_inputs(args, config)
        session = build_session(config)
        instruction = Instruction(text=instruction_text, image=image)
        bundle = build_run_context(session, image, instruction_text)
        evolved = evolver_mod.evolve(
            instruction, bundle, session.chat("evolver"), retries=config.evolve_retries
        )
        deps = build_agent_deps(session)
        deps.query_text = instruction_text
    except (FileNotFoundError, SchemaError, ValueError, ParseError) as exc:
        _fail(str(exc))
        return EXIT_INPUT
    except EvolveFailed as exc:
        _fail(f"evolve failed: {exc}")
        return EXIT_INPUT
    except (BackendError, CaptionSmithError) as exc:
        _fail(str(exc))
        return EXIT_BACKEND

    trace = agent_mod.run(evolved, image, deps)

    trace_out = getattr(args, "trace_out", None)
    if trace_out is None:
        trace_out = config.trace_dir / "caption_trace.jsonl"
    agent_mod.write_trace(
        trace_out,
        trace,
        instruction_text=evolved.text,
        spec_block=render_constraint_block(evolved.spec),
        config=deps.config,
        backend_ids=session.backend_ids(),
    )
    session.save_recordings()

    if trace.terminated_reason is TerminationReason.FINAL_ANSWER:
        print(trace.final_caption.text)
        return EXIT_OK
    _fail(f"run ended with {trace.terminated_reason.value}"
          + (f": {trace.error}" if trace.error else ""))
    return EXIT_BACKEND


def cmd_index(args) -> int:
    config = _common_config(args)
    try:
        db_path = Path(args.examples) if args.examples else (config.example_db or default_example_db())
        examples = load_examples(db_path)
        session = build_session(config)
        store = build_index(examples, session.embedder)
        save_store(store, args.out)
    except (FileNotFoundError, SchemaError, ValueError) as exc:
        _fail(str(exc))
        return EXIT_INPUT
    except BackendError as exc:
        _fail(str(exc))
        return EXIT_BACKEND
    print(f"T={len(store)} dim={store.dim}")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        caption_text = Path(args.caption_file).read_text(encoding="utf-8").rstrip("\n")
        spec_text = Path(args.spec_file).read_text(encoding="utf-8")
        spec = extract_constraint_block(spec_text)
    except FileNotFoundError as exc:
        _fail(str(exc))
        return EXIT_INPUT
    except (MissingBlock, MalformedBlock) as exc:
        _fail(str(exc))
        return EXIT_INPUT

    caption = Caption(caption_text)
    if getattr(args, "judge", False):
        config = _common_config(args)
        try:
            session = build_session(config)
            report = verify_judged(caption, spec, session.chat("judge"))
        except (SchemaError, BackendError) as exc:
            _fail(str(exc))
            return EXIT_BACKEND
    else:
        report = verify_deterministic(caption, spec)
    print(report.render())
    return EXIT_OK if report.overall else EXIT_CONSTRAINT


def cmd_replay(args) -> int:
    args.mode = "replay"
    if getattr(args, "scenario", None) is None:
        _fail("replay needs --scenario")
        return EXIT_INPUT
    return cmd_caption(args)


# --- argument parsing -----------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to a JSON config file")
    parser.add_argument("--mode", choices=("fixture", "record", "replay"))
    parser.add_argument("--scenario", help="scenario directory (fixtures, cassettes, manifest)")
    parser.add_argument("--trace-dir", dest="trace_dir", help="where trace files are written")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="captionsmith",
        description="Evolve caption instructions and satisfy them with a tool-using agent.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_evolve = sub.add_parser("evolve", help="turn a simple request into a professional instruction")
    p_evolve.add_argument("--image", help="path to the image")
    p_evolve.add_argument("--instruction", help="the user's caption request")
    p_evolve.add_argument("--no-context", dest="no_context", action="store_true")
    _add_common(p_evolve)
    p_evolve.set_defaults(func=cmd_evolve)

    p_caption = sub.add_parser("caption", help="run the full evolve-then-caption pipeline")
    p_caption.add_argument("--image", help="path to the image")
    p_caption.add_argument("--instruction", help="the user's caption request")
    p_caption.add_argument("--no-context", dest="no_context", action="store_true")
    p_caption.add_argument("--trace-out", dest="trace_out", help="trace file path")
    p_caption.add_argument("--example-db", dest="example_db", help="worked-example database")
    _add_common(p_caption)
    p_caption.set_defaults(func=cmd_caption)

    p_index = sub.add_parser("index", help="embed an example database into a vector index")
    p_index.add_argument("--examples", help="example database (JSON lines)")
    p_index.add_argument("--out", required=True, help="index file to write")
    _add_common(p_index)
    p_index.set_defaults(func=cmd_index)

    p_verify = sub.add_parser("verify", help="check a caption file against a constraint block")
    p_verify.add_argument("--caption-file", dest="caption_file", required=True)
    p_verify.add_argument("--spec-file", dest="spec_file", required=True)
    p_verify.add_argument("--judge", action="store_true", help="also judge subjective dimensions")
    _add_common(p_verify)
    p_verify.set_defaults(func=cmd_verify)

    p_replay = sub.add_parser("replay", help="re-run a recorded scenario from its cassettes")
    p_replay.add_argument("--trace-out", dest="trace_out", help="trace file path")
    p_replay.add_argument("--example-db", dest="example_db", help="worked-example database")
    _add_common(p_replay)
    p_replay.set_defaults(func=cmd_replay)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
