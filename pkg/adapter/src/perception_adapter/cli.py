"""CLI: `adapter extract` (video -> frames), `adapter detect` (frames -> JSONL)."""

from __future__ import annotations

import argparse
import sys

from .emit import AdapterConfig, detect_and_emit
from .frames import VideoError, extract_frames


def _cmd_extract(args: argparse.Namespace) -> int:
    out = extract_frames(args.video, args.out, target_fps=args.fps)
    print(f"frames -> {out}")
    return 0


def _cmd_detect(args: argparse.Namespace) -> int:
    config = AdapterConfig(
        detector=args.detector,
        confidence_threshold=args.conf,
        tile_plan=args.tile_plan,
        tile_w=args.tile_w,
        tile_h=args.tile_h,
        overlap=args.overlap,
        nms_iou=args.nms_iou,
        merge=not args.per_tile,
        track=args.track,
    )
    jsonl = detect_and_emit(args.frames, args.out, config)
    print(f"detections -> {jsonl}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adapter", description="Video-to-detections front end")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="decode video into a frame directory + manifest")
    p.add_argument("--video", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fps", type=float, default=10.0, help="target frame rate")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("detect", help="run tiled detection over a frame directory")
    p.add_argument("--frames", required=True, help="frame directory with manifest.json")
    p.add_argument("--out", required=True)
    p.add_argument("--detector", default="blob")
    p.add_argument("--conf", type=float, default=0.25)
    p.add_argument("--tile-plan", help="tile plan JSON exported by the engine")
    p.add_argument("--tile-w", type=int, default=640)
    p.add_argument("--tile-h", type=int, default=640)
    p.add_argument("--overlap", type=float, default=0.25)
    p.add_argument("--nms-iou", type=float, default=0.5)
    p.add_argument("--per-tile", action="store_true", help="skip local merge; dump per-tile results")
    p.add_argument("--track", action="store_true", help="assign track ids before export")
    p.set_defaults(func=_cmd_detect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (VideoError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
