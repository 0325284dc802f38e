"""Command line entry points: serve, replay, score, demo, fixtures."""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

from .. import fixtures as fixture_mod
from ..scene import ParseError, ValidationError, load_scene
from ..scenarios import SCENARIOS, default_out_dir, run_scenario
from ..session import DivergenceAt, SnapshotMismatch, read_log, replay
from ..tasks import IncompleteLog, score_session
from .engine import EngineConfig


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lapaware",
        description="Deterministic laparoscopic training simulator gateway")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the live simulation server")
    serve.add_argument("--scene", required=True, help="scene JSON file")
    serve.add_argument("--task", required=True, help="task annotation name")
    serve.add_argument("--port", type=int, default=8765)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--record", help="write the session log here")
    serve.add_argument("--seed", type=int, help="seed for optional perception noise")
    serve.add_argument("--tick-rate", type=int, default=60)
    serve.add_argument("--ticks", type=int, help="stop after this many ticks")
    serve.add_argument("--record-images", action="store_true")

    rep = sub.add_parser("replay", help="verify a recorded log byte-for-byte")
    rep.add_argument("--scene", required=True)
    rep.add_argument("--log", required=True)
    rep.add_argument("--report", help="also score the log into this JSON file")

    score = sub.add_parser("score", help="score a recorded log")
    score.add_argument("--log", required=True)
    score.add_argument("--report", required=True)

    demo = sub.add_parser("demo", help="run a scripted golden scenario headless")
    demo.add_argument("--scenario", required=True, choices=sorted(SCENARIOS))
    demo.add_argument("--out", help="output directory (default $LAPAWARE_LOG_DIR or .)")
    demo.add_argument("--record-images", action="store_true")

    fix = sub.add_parser("fixtures", help="export the built-in scene fixtures")
    fix.add_argument("--out", required=True)
    fix.add_argument("--name", choices=sorted(fixture_mod.FIXTURES),
                     help="export just one fixture")
    return parser


def _cmd_serve(args) -> int:
    from .server import GatewayServer

    scene = load_scene(args.scene)
    overrides: dict = {"tick_rate": args.tick_rate}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.record_images:
        overrides["record_images"] = True
    config = EngineConfig.for_scene(scene, **overrides)
    record = args.record
    if record is None and args.ticks is not None:
        record = str(default_out_dir() / "session.lapslog")
    server = GatewayServer(scene, args.task, config, host=args.host,
                           port=args.port, record_path=record,
                           max_ticks=args.ticks)
    print(f"serving scene={args.scene} task={args.task} "
          f"on ws://{args.host}:{args.port}", flush=True)
    try:
        asyncio.run(server.run())
    except KeyboardInterrupt:
        pass
    if server.final_hash is not None:
        print(f"final state hash {server.final_hash:016x}")
    return 0


def _cmd_replay(args) -> int:
    scene = load_scene(args.scene)
    records = read_log(args.log)
    final = replay(scene, records)
    print(f"replay ok: {len(records)} records, final state hash {final:016x}")
    if args.report:
        result = score_session(records)
        Path(args.report).write_text(
            json.dumps(result.to_dict(), indent=2) + "\n", encoding="utf-8")
        print(f"report written to {args.report}")
    return 0


def _cmd_score(args) -> int:
    records = read_log(args.log)
    result = score_session(records)
    Path(args.report).write_text(
        json.dumps(result.to_dict(), indent=2) + "\n", encoding="utf-8")
    status = "success" if result.success else "failed"
    print(f"{result.task}: {status}, {len(result.error_events)} error events")
    return 0


def _cmd_demo(args) -> int:
    out = Path(args.out) if args.out else default_out_dir()
    overrides = {"record_images": True} if args.record_images else {}
    run = run_scenario(args.scenario, out_dir=out, **overrides)
    status = "success" if run.result.success else "failed"
    kinds = sorted({e["kind"] for e in run.result.error_events})
    print(f"{args.scenario}: {run.ticks} ticks, {status}"
          + (f", errors: {', '.join(kinds)}" if kinds else ""))
    print(f"log:    {out / (args.scenario + '.lapslog')}")
    print(f"report: {out / (args.scenario + '.report.json')}")
    return 0


def _cmd_fixtures(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = [args.name] if args.name else sorted(fixture_mod.FIXTURES)
    for name in names:
        path = fixture_mod.export_fixture(name, out)
        print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "serve": _cmd_serve,
        "replay": _cmd_replay,
        "score": _cmd_score,
        "demo": _cmd_demo,
        "fixtures": _cmd_fixtures,
    }
    try:
        return handlers[args.command](args)
    except (ParseError, ValidationError, SnapshotMismatch, DivergenceAt,
            IncompleteLog, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
