"""Command-line interface.

One subcommand per pipeline stage plus serving, chat, and evaluation. All
commands accept --mock (deterministic offline providers), --seed, and
key=value configuration from a file (--config) or inline (--set). The
effective configuration is echoed to stderr at startup so every run is
self-describing; results go to stdout or the named output files.

Exit codes: 0 success, 1 operational failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import corpus, evaluation, mixer, pipeline
from .corpus import (
    CharacterProfile,
    Dialogue,
    InstructionRecord,
    canonical_json,
    compute_stats,
    parse_corpus,
    render_stats,
    write_corpus,
)
from .engine import EngineConfig, RoleplayEngine
from .errors import ConfigError, RolekitError, ValidationError
from .gateway import (
    Gateway,
    GatewayConfig,
    OpenAIChatProvider,
    OpenAIEmbeddingProvider,
    mock_gateway,
)
from .pipeline import AnnotationVote, load_template
from .retrieval import DEFAULT_CHUNK_SIZE, DEFAULT_OVERLAP, RetrievalIndex

_CONFIG_DEFAULTS = {
    "gateway.base_url": "https://api.openai.com/v1",
    "gateway.api_key_env": "OPENAI_API_KEY",
    "gateway.chat_model": "gpt-4",
    "gateway.embed_model": "text-embedding-ada-002",
    "gateway.max_retries": "3",
    "gateway.max_in_flight": "4",
    "gateway.cache_dir": "",
    "gateway.timeout": "60",
    "pipeline.annotators": "3",
    "pipeline.question_num": "5",
    "pipeline.k_examples": "3",
    "retrieval.chunk_size": str(DEFAULT_CHUNK_SIZE),
    "retrieval.overlap": str(DEFAULT_OVERLAP),
    "engine.retrieval_k": "3",
    "engine.max_history_turns": "10",
    "eval.beta": "1.0",
}


def _parse_config_line(line: str, source: str) -> Optional[tuple[str, str]]:
    stripped = line.strip()
    if not stripped or stripped.startswith("#"):
        return None
    if "=" not in stripped:
        raise ConfigError(f"{source}: expected key=value, got {stripped!r}")
    key, value = stripped.split("=", 1)
    key = key.strip()
    if not key or any(c.isspace() for c in key):
        raise ConfigError(f"{source}: bad config key {key!r}")
    return key, value.strip()


def load_config(path: Optional[str], overrides: Sequence[str]) -> dict[str, str]:
    cfg = dict(_CONFIG_DEFAULTS)
    if path:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        for i, line in enumerate(text.splitlines(), start=1):
            parsed = _parse_config_line(line, f"{path}:{i}")
            if parsed:
                cfg[parsed[0]] = parsed[1]
    for item in overrides:
        parsed = _parse_config_line(item, "--set")
        if parsed is None:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        cfg[parsed[0]] = parsed[1]
    return cfg


def _cfg_int(cfg: dict, key: str) -> int:
    try:
        return int(cfg[key])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"config {key} must be an integer, got {cfg.get(key)!r}") from exc


def _cfg_float(cfg: dict, key: str) -> float:
    try:
        return float(cfg[key])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"config {key} must be a number, got {cfg.get(key)!r}") from exc


def _echo_config(cfg: dict, args) -> None:
    if args.quiet:
        return
    print(f"config: seed={args.seed} mock={args.mock}", file=sys.stderr)
    for key in sorted(cfg):
        print(f"config: {key}={cfg[key]}", file=sys.stderr)


def build_gateway(cfg: dict, args) -> Gateway:
    cache_dir = Path(cfg["gateway.cache_dir"]) if cfg["gateway.cache_dir"] else None
    if args.mock:
        return mock_gateway(
            seed=args.seed,
            cache_dir=cache_dir,
            max_retries=_cfg_int(cfg, "gateway.max_retries"),
            max_in_flight=_cfg_int(cfg, "gateway.max_in_flight"),
        )
    config = GatewayConfig(
        base_url=cfg["gateway.base_url"],
        api_key_env=cfg["gateway.api_key_env"],
        max_retries=_cfg_int(cfg, "gateway.max_retries"),
        max_in_flight=_cfg_int(cfg, "gateway.max_in_flight"),
        cache_dir=cache_dir,
        timeout=_cfg_float(cfg, "gateway.timeout"),
    )
    return Gateway(
        chat_provider=OpenAIChatProvider(config, cfg["gateway.chat_model"]),
        embedding_provider=OpenAIEmbeddingProvider(config, cfg["gateway.embed_model"]),
        config=config,
    )


# -- shared I/O helpers ---------------------------------------------------------


def _report_rejections(rejections, path: str, quiet: bool) -> None:
    if not quiet:
        for rej in rejections:
            print(f"reject: {path}:{rej.line_no}: {rej.reason}", file=sys.stderr)


def _load_dialogues(path: str, quiet: bool) -> list[Dialogue]:
    report = parse_corpus(path, "dialogues")
    _report_rejections(report.rejections, path, quiet)
    return list(report.records)


def _load_instructions(path: str, quiet: bool) -> list[InstructionRecord]:
    report = parse_corpus(path, "instructions")
    _report_rejections(report.rejections, path, quiet)
    return list(report.records)


def _load_profiles(path: str, quiet: bool) -> list[CharacterProfile]:
    report = parse_corpus(path, "profiles")
    _report_rejections(report.rejections, path, quiet)
    return list(report.records)


def _pick_profile(profiles: Sequence[CharacterProfile], role: str) -> CharacterProfile:
    for profile in profiles:
        if profile.role_name == role:
            return profile
    raise ValidationError(f"role {role!r} not found in profiles file")


def _write_jsonl(path: str, rows) -> None:
    Path(path).write_text("".join(canonical_json(r) + "\n" for r in rows), encoding="utf-8")


def _load_votes(path: str) -> list[AnnotationVote]:
    votes = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            votes.append(
                AnnotationVote(
                    dialogue_id=obj["dialogue_id"],
                    turn_index=obj["turn_index"],
                    annotator_id=obj["annotator_id"],
                    label=obj["label"],
                    rationale=obj.get("rationale", ""),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValidationError) as exc:
            raise ValidationError(f"{path}:{line_no}: bad vote record: {exc}") from exc
    return votes


# -- subcommand handlers ----------------------------------------------------------


def cmd_clean(args, cfg) -> int:
    parse_report = parse_corpus(args.in_path, "dialogues")
    _report_rejections(parse_report.rejections, args.in_path, args.quiet)
    cleaned, stage_report = pipeline.clean_dialogues(list(parse_report.records))
    write_corpus(args.out, cleaned)
    if args.report:
        rows = [
            {"kind": "reject", "line_no": r.line_no, "reason": r.reason}
            for r in parse_report.rejections
        ] + stage_report
        _write_jsonl(args.report, rows)
    drops = sum(1 for row in stage_report if row["kind"] == "drop")
    print(
        f"clean: {len(parse_report.records)} parsed, {len(parse_report.rejections)} rejected, "
        f"{drops} dropped, {len(cleaned)} kept -> {args.out}"
    )
    return 0


def cmd_annotate(args, cfg) -> int:
    dialogues = _load_dialogues(args.in_path, args.quiet)
    gateway = build_gateway(cfg, args)
    n = args.annotators if args.annotators is not None else _cfg_int(cfg, "pipeline.annotators")
    votes, report = pipeline.annotate_emotions(dialogues, gateway, n_annotators=n)
    _write_jsonl(
        args.out,
        [
            {
                "dialogue_id": v.dialogue_id,
                "turn_index": v.turn_index,
                "annotator_id": v.annotator_id,
                "label": v.label,
                "rationale": v.rationale,
            }
            for v in votes
        ],
    )
    if args.report:
        _write_jsonl(args.report, report)
    pending = sum(1 for row in report if row["kind"] == "pending")
    print(f"annotate: {len(votes)} votes from {n} annotators, {pending} pending -> {args.out}")
    return 0


def cmd_consensus(args, cfg) -> int:
    votes = _load_votes(args.votes)
    results = pipeline.merge_consensus(votes)
    _write_jsonl(
        args.results,
        [
            {
                "dialogue_id": r.dialogue_id,
                "turn_index": r.turn_index,
                "status": r.status,
                "label": r.label,
            }
            for r in results
        ],
    )
    resolved = sum(1 for r in results if r.status == pipeline.CONSENSUS_RESOLVED)
    if args.in_path and args.out:
        dialogues = _load_dialogues(args.in_path, args.quiet)
        labeled = pipeline.apply_consensus(dialogues, results)
        write_corpus(args.out, labeled)
        print(
            f"consensus: {resolved}/{len(results)} resolved, labeled corpus -> {args.out}, "
            f"results -> {args.results}"
        )
    else:
        print(f"consensus: {resolved}/{len(results)} resolved -> {args.results}")
    return 0


def cmd_profile(args, cfg) -> int:
    dialogues = _load_dialogues(args.in_path, args.quiet)
    gateway = build_gateway(cfg, args)
    template_text = Path(args.template).read_text(encoding="utf-8") if args.template else None
    profile, warnings = pipeline.generate_profile(
        args.role, dialogues, gateway, description_template=template_text
    )
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)
    write_corpus(args.out, [profile])
    print(f"profile: {args.role} ({len(profile.traits)} traits) -> {args.out}")
    return 0


def cmd_gen_qa(args, cfg) -> int:
    dialogues = _load_dialogues(args.in_path, args.quiet)
    profiles = _load_profiles(args.profiles, args.quiet)
    profile = _pick_profile(profiles, args.role)
    gateway = build_gateway(cfg, args)
    n = args.questions if args.questions is not None else _cfg_int(cfg, "pipeline.question_num")
    records, report = pipeline.generate_context_instruct(
        profile, dialogues, gateway, question_num=n
    )
    write_corpus(args.out, records)
    if args.report:
        _write_jsonl(args.report, report)
    spe = sum(1 for r in records if r.category == corpus.CATEGORY_SPE)
    print(f"gen-qa: {len(records)} pairs ({spe} SPE, {len(records) - spe} CUS) -> {args.out}")
    return 0


def cmd_gen_general(args, cfg) -> int:
    instructions = [
        line.strip()
        for line in Path(args.instructions).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    profiles = _load_profiles(args.profiles, args.quiet)
    profile = _pick_profile(profiles, args.role)
    examples = _load_instructions(args.examples, args.quiet) if args.examples else []
    gateway = build_gateway(cfg, args)
    records, report = pipeline.generate_general_responses(
        instructions,
        profile,
        gateway,
        examples=examples,
        k_examples=_cfg_int(cfg, "pipeline.k_examples"),
    )
    write_corpus(args.out, records)
    if args.report:
        _write_jsonl(args.report, report)
    print(f"gen-general: {len(records)} responses as {args.role} -> {args.out}")
    return 0


def cmd_mix(args, cfg) -> int:
    general = _load_instructions(args.general, args.quiet) if args.general else []
    specific = _load_instructions(args.specific, args.quiet) if args.specific else []
    config = mixer.MixConfig(
        strategy=args.strategy,
        general_weight=args.general_weight,
        specific_weight=args.specific_weight,
        seed=args.seed,
        shuffle=not args.no_shuffle,
    )
    mixed = mixer.mix(general + specific, config)
    write_corpus(args.out, mixed)
    print(
        f"mix: {args.strategy} over {len(general)} general + {len(specific)} specific "
        f"-> {len(mixed)} records -> {args.out}"
    )
    return 0


def cmd_export(args, cfg) -> int:
    records = _load_instructions(args.in_path, args.quiet)
    finetune = mixer.FinetuneConfig()
    manifest = mixer.export_training_set(records, args.out_dir, finetune)
    print(f"export: {manifest['records']} records -> {args.out_dir} (sha256 {manifest['train_sha256'][:12]})")
    return 0


def cmd_index(args, cfg) -> int:
    dialogues = _load_dialogues(args.in_path, args.quiet)
    profiles = _load_profiles(args.profiles, args.quiet)
    profile = _pick_profile(profiles, args.role)
    role_dialogues = [d for d in dialogues if args.role in d.speakers]
    gateway = build_gateway(cfg, args)
    index = RetrievalIndex.build(
        profile,
        role_dialogues,
        gateway,
        chunk_size=_cfg_int(cfg, "retrieval.chunk_size"),
        overlap=_cfg_int(cfg, "retrieval.overlap"),
    )
    index.save(args.out_dir)
    print(f"index: {len(index)} chunks for {args.role} -> {args.out_dir}")
    return 0


def _build_engine(args, cfg) -> RoleplayEngine:
    profiles = {p.role_name: p for p in _load_profiles(args.profiles, args.quiet)}
    indices = {}
    if args.indices_root:
        root = Path(args.indices_root)
        for name in profiles:
            candidate = root / name
            if (candidate / "vectors.bin").exists():
                indices[name] = RetrievalIndex.load(candidate)
    gateway = build_gateway(cfg, args)
    config = EngineConfig(
        retrieval_k=_cfg_int(cfg, "engine.retrieval_k"),
        max_history_turns=_cfg_int(cfg, "engine.max_history_turns"),
    )
    return RoleplayEngine(gateway, profiles, indices, config=config)


def cmd_serve(args, cfg) -> int:
    import uvicorn

    from .server import create_app

    engine = _build_engine(args, cfg)
    if args.snapshot and Path(args.snapshot).exists():
        restored = engine.load_sessions(args.snapshot)
        if not args.quiet:
            print(f"serve: restored {restored} session(s) from {args.snapshot}", file=sys.stderr)
    app = create_app(engine, cors=args.cors)
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    finally:
        if args.snapshot:
            engine.save_sessions(args.snapshot)
    return 0


def _chat_over_http(args) -> int:
    import requests

    base = args.server.rstrip("/")
    resp = requests.post(f"{base}/sessions", json={"role_name": args.role}, timeout=30)
    if resp.status_code >= 400:
        raise RolekitError(f"server refused session: {resp.status_code} {resp.text[:200]}")
    session_id = resp.json()["session_id"]
    if args.session_file:
        Path(args.session_file).write_text(session_id + "\n", encoding="utf-8")
    for text in _chat_inputs(args):
        turn = requests.post(
            f"{base}/sessions/{session_id}/turns", json={"text": text}, timeout=120
        )
        if turn.status_code >= 400:
            raise RolekitError(f"turn failed: {turn.status_code} {turn.text[:200]}")
        print(f"{args.role}: {turn.json()['reply']}")
    if args.transcript_out:
        final = requests.get(f"{base}/sessions/{session_id}", timeout=30)
        final.raise_for_status()
        Path(args.transcript_out).write_text(
            json.dumps(final.json(), ensure_ascii=False, sort_keys=True) + "\n", encoding="utf-8"
        )
    return 0


def _chat_inputs(args):
    if args.script:
        for line in Path(args.script).read_text(encoding="utf-8").splitlines():
            if line.strip():
                yield line.strip()
        return
    while True:
        try:
            line = input("you> " if sys.stdin.isatty() else "")
        except EOFError:
            return
        if line.strip() in ("", "/quit", "/exit"):
            if line.strip():
                return
            continue
        yield line.strip()


def cmd_chat(args, cfg) -> int:
    if args.server:
        return _chat_over_http(args)
    engine = _build_engine(args, cfg)
    session = engine.create_session(args.role)
    if args.session_file:
        Path(args.session_file).write_text(session.session_id + "\n", encoding="utf-8")
    for text in _chat_inputs(args):
        reply, trace = engine.take_turn(session.session_id, text)
        if args.show_trace:
            for r in trace.retrieved:
                print(f"trace: {r.chunk_id} score={r.score:.4f}", file=sys.stderr)
        print(f"{args.role}: {reply}")
    if args.transcript_out:
        final = engine.get_session(session.session_id)
        body = {
            "session_id": final.session_id,
            "role_name": final.role_name,
            "turns": [{"user": u, "assistant": a} for u, a in final.history],
        }
        Path(args.transcript_out).write_text(
            json.dumps(body, ensure_ascii=False, sort_keys=True) + "\n", encoding="utf-8"
        )
    return 0


def cmd_stats(args, cfg) -> int:
    dialogues = _load_dialogues(args.dialogues, args.quiet) if args.dialogues else []
    instructions = _load_instructions(args.instructions, args.quiet) if args.instructions else []
    profiles = _load_profiles(args.profiles, args.quiet) if args.profiles else []
    stats = compute_stats(dialogues, profiles=profiles, instructions=instructions)
    text = render_stats(stats)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"stats -> {args.out}")
    else:
        print(text, end="")
    return 0


def _load_eval_items(path: str, quiet: bool):
    items, rejections = evaluation.parse_eval_items(path)
    _report_rejections(rejections, path, quiet)
    if not items:
        raise ValidationError(f"no usable evaluation items in {path}")
    return items


def cmd_eval_rouge(args, cfg) -> int:
    items = _load_eval_items(args.items, args.quiet)
    report = evaluation.rouge_report(items, beta=_cfg_float(cfg, "eval.beta"))
    evaluation.write_reports(args.out_dir, report, evaluation.render_rouge_markdown(report))
    print(f"eval rouge: {len(items)} items -> {args.out_dir}")
    return 0


def cmd_eval_rpcs(args, cfg) -> int:
    items = _load_eval_items(args.items, args.quiet)
    gateway = build_gateway(cfg, args)
    report = evaluation.rpcs_report(items, gateway)
    evaluation.write_reports(args.out_dir, report, evaluation.render_rpcs_markdown(report))
    print(f"eval rpcs: {len(items)} items -> {args.out_dir}")
    return 0


def cmd_eval_judge(args, cfg) -> int:
    items = _load_eval_items(args.items, args.quiet)
    gateway = build_gateway(cfg, args)
    template = load_template("JudgeEval")
    verdicts, skipped = evaluation.judge_items(items, template, gateway, seed=args.seed)
    report = evaluation.judge_report(verdicts, skipped)
    evaluation.write_reports(args.out_dir, report, evaluation.render_judge_markdown(report))
    print(f"eval judge: {len(verdicts)} ranked, {len(skipped)} skipped -> {args.out_dir}")
    return 0


def cmd_eval_human(args, cfg) -> int:
    sheets, rejections = evaluation.parse_human_sheets(args.sheets)
    _report_rejections(rejections, args.sheets, args.quiet)
    if not sheets:
        raise ValidationError(f"no usable score sheets in {args.sheets}")
    report = evaluation.aggregate_human(sheets)
    evaluation.write_reports(args.out_dir, report, evaluation.render_human_markdown(report))
    print(f"eval human: {len(sheets)} sheets -> {args.out_dir}")
    return 0


# -- parser wiring -----------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="key=value config file")
    shared.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="inline config override, repeatable")
    shared.add_argument("--seed", type=int, default=0, help="seed for sampling and mock providers")
    shared.add_argument("--mock", action="store_true", help="use deterministic offline providers")
    shared.add_argument("--quiet", action="store_true", help="suppress config echo and warnings")

    parser = argparse.ArgumentParser(prog="rolekit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("clean", parents=[shared], help="normalize raw dialogues")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(handler=cmd_clean)

    p = sub.add_parser("annotate", parents=[shared], help="collect emotion votes per utterance")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--annotators", type=int)
    p.set_defaults(handler=cmd_annotate)

    p = sub.add_parser("consensus", parents=[shared], help="merge votes by strict majority")
    p.add_argument("--votes", required=True)
    p.add_argument("--results", required=True)
    p.add_argument("--in", dest="in_path", help="dialogues to label with resolved emotions")
    p.add_argument("--out", help="labeled dialogue output (requires --in)")
    p.set_defaults(handler=cmd_consensus)

    p = sub.add_parser("profile", parents=[shared], help="write a character profile from a script")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--role", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--template", help="custom profile prompt file")
    p.set_defaults(handler=cmd_profile)

    p = sub.add_parser("gen-qa", parents=[shared], help="generate grounded Q&A instruction records")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--profiles", required=True)
    p.add_argument("--role", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--questions", type=int)
    p.set_defaults(handler=cmd_gen_qa)

    p = sub.add_parser("gen-general", parents=[shared],
                       help="answer general instructions in a role's voice")
    p.add_argument("--instructions", required=True, help="text file, one instruction per line")
    p.add_argument("--profiles", required=True)
    p.add_argument("--role", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--examples", help="instruction records used as few-shot examples")
    p.add_argument("--report")
    p.set_defaults(handler=cmd_gen_general)

    p = sub.add_parser("mix", parents=[shared], help="compose a training set from pools")
    p.add_argument("--general", help="general instruction records")
    p.add_argument("--specific", help="character-specific instruction records")
    p.add_argument("--out", required=True)
    p.add_argument("--strategy", default=mixer.STRATEGY_HYBRID, choices=mixer.STRATEGIES)
    p.add_argument("--general-weight", type=float, default=1.0)
    p.add_argument("--specific-weight", type=float, default=1.0)
    p.add_argument("--no-shuffle", action="store_true")
    p.set_defaults(handler=cmd_mix)

    p = sub.add_parser("export", parents=[shared], help="write train.jsonl + finetune.conf + manifest")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=cmd_export)

    p = sub.add_parser("index", parents=[shared], help="build a retrieval index for one role")
    p.add_argument("--in", dest="in_path", required=True, help="labeled dialogues")
    p.add_argument("--profiles", required=True)
    p.add_argument("--role", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=cmd_index)

    p = sub.add_parser("serve", parents=[shared], help="run the HTTP chat service")
    p.add_argument("--profiles", required=True)
    p.add_argument("--indices-root", help="directory holding one index directory per role")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--cors", action="store_true")
    p.add_argument("--snapshot", help="session snapshot file, restored on start, written on stop")
    p.set_defaults(handler=cmd_serve)

    p = sub.add_parser("chat", parents=[shared], help="interactive or scripted chat")
    p.add_argument("--role", required=True)
    p.add_argument("--profiles", help="required unless --server is given")
    p.add_argument("--indices-root")
    p.add_argument("--server", help="chat against a running service instead of in-process")
    p.add_argument("--script", help="text file, one user turn per line")
    p.add_argument("--session-file", help="write the session id here")
    p.add_argument("--transcript-out", help="write the final transcript JSON here")
    p.add_argument("--show-trace", action="store_true")
    p.set_defaults(handler=cmd_chat)

    p = sub.add_parser("stats", parents=[shared], help="corpus summary table")
    p.add_argument("--dialogues")
    p.add_argument("--instructions")
    p.add_argument("--profiles")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser("eval", parents=[], help="scoring and report generation")
    evalsub = p.add_subparsers(dest="eval_command", required=True)

    q = evalsub.add_parser("rouge", parents=[shared], help="Rouge-L by category")
    q.add_argument("--items", required=True)
    q.add_argument("--out-dir", required=True)
    q.set_defaults(handler=cmd_eval_rouge)

    q = evalsub.add_parser("rpcs", parents=[shared], help="embedding cosine per model")
    q.add_argument("--items", required=True)
    q.add_argument("--out-dir", required=True)
    q.set_defaults(handler=cmd_eval_rpcs)

    q = evalsub.add_parser("judge", parents=[shared], help="model ranking by an LLM judge")
    q.add_argument("--items", required=True)
    q.add_argument("--out-dir", required=True)
    q.set_defaults(handler=cmd_eval_judge)

    q = evalsub.add_parser("human", parents=[shared], help="aggregate human score sheets")
    q.add_argument("--sheets", required=True)
    q.add_argument("--out-dir", required=True)
    q.set_defaults(handler=cmd_eval_human)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "chat" and not args.server and not args.profiles:
        parser.error("chat: --profiles is required unless --server is given")
    try:
        cfg = load_config(args.config, args.set)
        _echo_config(cfg, args)
        return args.handler(args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RolekitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
