"""Command-line entry points: bench, ask, serve, export, replay."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .bench import fixture_engine_factory, load_tasks, run_bench
from .model import RunStatus
from .runtime import GatewayDecisionFunction, RunConfig, RunEngine
from .storage import RunArchive, canonical_json, export_report, replay, terminal_summary_note
from .tools import CaptureLog, FixtureCorpus, LiveGateway, ToolSet


def _run_config(args: argparse.Namespace, clock_mode: str) -> RunConfig:
    return RunConfig(
        milestone_round_threshold=args.milestone_rounds,
        context_budget=args.budget,
        clock_mode=clock_mode,
    )


def _live_engine_factory(args: argparse.Namespace, config: RunConfig, runs_dir: Path):
    gateway = LiveGateway(
        base_url=os.environ.get("GATEWAY_URL", ""),
        api_key=os.environ.get("GATEWAY_KEY", ""),
        model=os.environ.get("GATEWAY_MODEL", ""),
        capture=CaptureLog(runs_dir / "gateway_capture.jsonl"),
    )
    if not gateway.base_url:
        raise SystemExit("live backend requires GATEWAY_URL (and usually GATEWAY_KEY/GATEWAY_MODEL)")
    search_url = os.environ.get("SEARCH_API_URL", "")
    if not search_url:
        raise SystemExit("live backend requires SEARCH_API_URL (and usually SEARCH_API_KEY)")
    tools = ToolSet.live(search_url, os.environ.get("SEARCH_API_KEY", ""))
    decision_fn = GatewayDecisionFunction(gateway)

    def factory(run_id: str, script_key: str) -> RunEngine:
        archive = RunArchive(run_id, config=config.to_dict(), directory=runs_dir / run_id)
        return RunEngine(run_id=run_id, decision_fn=decision_fn, tools=tools, archive=archive, config=config)

    return factory


def cmd_bench(args: argparse.Namespace) -> int:
    tasks = load_tasks(args.tasks)
    out_dir = Path(args.out)
    runs_dir = out_dir / "runs"
    if args.backend == "fixture":
        corpus = FixtureCorpus.load(args.corpus)
        config = _run_config(args, clock_mode="logical")
        factory = fixture_engine_factory(corpus, config, runs_dir=runs_dir)
    else:
        config = _run_config(args, clock_mode="wall")
        factory = _live_engine_factory(args, config, runs_dir)
    report = run_bench(
        tasks,
        factory,
        out_dir,
        max_steps=args.max_steps,
        concurrency=args.concurrency,
        figures=not args.no_figures,
    )
    print(report.summary_table())
    print(f"report written to {out_dir / 'report.json'} and {out_dir / 'report.csv'}")
    return 1 if report.aggregates["errors"] else 0


def cmd_ask(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    if args.backend == "fixture":
        corpus = FixtureCorpus.load(args.corpus)
        config = _run_config(args, clock_mode="logical")
        factory = fixture_engine_factory(corpus, config, runs_dir=out_dir)
    else:
        config = _run_config(args, clock_mode="wall")
        factory = _live_engine_factory(args, config, out_dir)
    engine = factory("ask", args.key or "default")
    engine.user_message(args.question)
    engine.run(max_steps=args.max_steps)
    state = engine.state
    if state.status is RunStatus.FINISHED:
        note = terminal_summary_note(state)
        print(note.body if note else "(finished without a summary note)")
        return 0
    print(f"run ended with status {state.status.value}", file=sys.stderr)
    return 1


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import RunManager, create_app

    config = RunConfig(milestone_round_threshold=args.milestone_rounds, context_budget=args.budget)
    runs_dir = Path(args.out)
    if args.backend == "fixture":
        corpus = FixtureCorpus.load(args.corpus)
        factory2 = fixture_engine_factory(corpus, config, runs_dir=runs_dir)

        def factory(run_id: str) -> RunEngine:
            return factory2(run_id, run_id)

    else:
        live = _live_engine_factory(args, config, runs_dir)

        def factory(run_id: str) -> RunEngine:
            return live(run_id, run_id)

    manager = RunManager(engine_factory=factory, capacity=args.capacity)
    app = create_app(manager)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    archive = RunArchive.load(args.run_dir)
    document = export_report(archive)
    if args.out:
        Path(args.out).write_text(document, encoding="utf-8")
        print(f"report written to {args.out}")
    else:
        print(document)
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    archive = RunArchive.load(args.run_dir)
    state = replay(archive)
    print(f"run: {archive.run_id}")
    print(f"events: {len(archive.events)}")
    print(f"actions: {len(state.actions)}  units: {len(state.units)}  sessions: {len(state.sessions)}")
    print(f"status: {state.status.value}")
    if args.dump:
        print(canonical_json(state.to_canonical_dict()))
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", choices=["fixture", "live"], default="fixture")
    parser.add_argument("--corpus", help="fixture corpus JSON (fixture backend)")
    parser.add_argument("--max-steps", type=int, default=64)
    parser.add_argument("--milestone-rounds", type=int, default=8,
                        help="rounds before a progress summary is demanded")
    parser.add_argument("--budget", type=int, default=32768, help="context token budget")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="dossier", description="steerable deep-research engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="run a benchmark task file headlessly")
    p.add_argument("--tasks", required=True, help="JSONL task file")
    p.add_argument("--out", default="bench_out", help="output directory")
    p.add_argument("--concurrency", type=int, default=1)
    p.add_argument("--no-figures", action="store_true")
    _add_common(p)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("ask", help="run a single question headlessly")
    p.add_argument("question")
    p.add_argument("--out", default="ask_out")
    p.add_argument("--key", help="fixture script key (defaults to 'default')")
    _add_common(p)
    p.set_defaults(fn=cmd_ask)

    p = sub.add_parser("serve", help="start the streaming session service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--capacity", type=int, default=16)
    p.add_argument("--out", default="serve_out", help="run archive directory")
    _add_common(p)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("export", help="export the report from a run archive")
    p.add_argument("run_dir")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_export)

    p = sub.add_parser("replay", help="replay a run archive and print a summary")
    p.add_argument("run_dir")
    p.add_argument("--dump", action="store_true", help="print the canonical state JSON")
    p.set_defaults(fn=cmd_replay)

    args = parser.parse_args(argv)
    if getattr(args, "backend", None) == "fixture" and args.command in ("bench", "ask", "serve"):
        if not args.corpus:
            parser.error("--corpus is required with the fixture backend")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
