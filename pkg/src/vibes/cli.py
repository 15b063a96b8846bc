"""Command line entry points: simulate, run, eval, mock-serve, plan-tiles."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import load_config
from .errors import VibesError
from .evaluation import (
    evaluate_run,
    frame_scores,
    read_score_log,
    score_timeline_svg,
)
from .pipeline import run_pipeline
from .simulator import GroundTruth, ScenarioSpec, render_frames, sample_scenario, simulate
from .tiling import plan_tiles


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )


def _build_config(args: argparse.Namespace):
    overrides = {}
    for item in args.overrides:
        if "=" not in item:
            raise VibesError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if getattr(args, "mode", None):
        overrides["bayes.mode"] = args.mode
    if getattr(args, "endpoint", None):
        overrides["reasoner.endpoint"] = args.endpoint
    return load_config(args.config, overrides)


def _cmd_simulate(args: argparse.Namespace) -> int:
    if args.spec:
        spec = ScenarioSpec.load(args.spec)
    else:
        spec = sample_scenario(args.seed)
    result = simulate(spec)
    out = result.write(args.out)
    if args.render:
        render_frames(result, out / "frames")
    print(
        f"simulated {spec.duration} frames, {spec.vehicles} vehicles, "
        f"{len(spec.anomalies)} anomalies -> {out}"
    )
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    config = _build_config(args)
    stats = run_pipeline(
        config,
        detections=args.detections,
        out_dir=args.out,
        frames_dir=args.frames,
        fmt=args.format,
    )
    print(
        f"processed {stats.frames_processed} frames "
        f"({stats.scoring_fps:.1f} scoring fps), "
        f"{stats.packets_emitted} packets, {stats.packets_spilled} spilled"
    )
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    gt = GroundTruth.load(args.gt)
    reports = None
    if args.reports:
        reports = [
            json.loads(line)
            for line in Path(args.reports).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
    report = evaluate_run(args.run, gt, reports=reports, tol=args.tol)
    out_path = Path(args.run) / "eval_report.json"
    report.save(out_path)
    if args.plot:
        rows = read_score_log(Path(args.run) / "scores.csv")
        scores = frame_scores(rows, gt.duration)
        triggers = [m["t_a"] for m in report.matches if m["t_a"] is not None]
        score_timeline_svg(scores, triggers, Path(args.run) / "score_timeline.svg")
    print(json.dumps({k: v for k, v in report.to_dict().items() if k != "matches"}, indent=2))
    return 0


def _cmd_mock_serve(args: argparse.Namespace) -> int:
    from .mockserver import MockReasonerServer, load_responses

    responses = load_responses(args.responses) if args.responses else None
    server = MockReasonerServer(
        port=args.port,
        responses=responses,
        latency_s=args.latency,
        fail_rate=args.fail_rate,
    )
    server.start()
    print(f"mock reasoner listening on {server.url}")
    try:
        while True:
            import time

            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()
    return 0


def _cmd_plan_tiles(args: argparse.Namespace) -> int:
    plan = plan_tiles(args.width, args.height, args.tile_w, args.tile_h, args.overlap)
    plan.save(args.out)
    print(f"{len(plan.tiles)} tiles -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vibes",
        description="Far-field expressway anomaly detection pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic scene")
    p.add_argument("--spec", help="scenario JSON file (omit to sample by seed)")
    p.add_argument("--seed", type=int, default=0, help="seed for a sampled scenario")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--render", action="store_true", help="also rasterize frames/")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("run", help="run the scoring pipeline over a detection stream")
    p.add_argument("--detections", required=True, help="detections file")
    p.add_argument("--format", choices=["jsonl", "mot"], default="jsonl")
    p.add_argument("--frames", help="frame store directory (enables crop images)")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--mode", choices=["full", "no_frenet", "static_prior"])
    p.add_argument("--endpoint", help="reasoner endpoint URL (enables dispatch)")
    _add_config_args(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("eval", help="score a run directory against ground truth")
    p.add_argument("--run", required=True, help="run directory from `vibes run`")
    p.add_argument("--gt", required=True, help="ground-truth JSON from `vibes simulate`")
    p.add_argument("--reports", help="incident log JSONL for semantic accuracy")
    p.add_argument("--tol", type=int, default=20, help="event match tolerance, frames")
    p.add_argument("--plot", action="store_true", help="emit score_timeline.svg")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("mock-serve", help="serve a mock reasoner endpoint")
    p.add_argument("--port", type=int, default=8750)
    p.add_argument("--responses", help="JSON file with canned response bodies")
    p.add_argument("--latency", type=float, default=0.0, help="seconds per request")
    p.add_argument("--fail-rate", type=float, default=0.0, help="failure injection rate")
    p.set_defaults(func=_cmd_mock_serve)

    p = sub.add_parser("plan-tiles", help="export a tile plan JSON for external detectors")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--tile-w", type=int, default=640)
    p.add_argument("--tile-h", type=int, default=640)
    p.add_argument("--overlap", type=float, default=0.25)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_plan_tiles)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VibesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
