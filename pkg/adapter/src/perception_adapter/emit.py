"""Tiled detection over a frame directory, exported as detection JSONL.

Per frame: crop each tile from the plan, optionally resize to the detector
input, run the detector, map boxes back through the resize and tile origin
into frame coordinates, then either merge duplicates locally (class-aware
greedy NMS, ties by lexicographic box) or keep per-tile results as a side
file for an external merge. The JSONL output always conforms to the engine's
ingest schema:

    {"frame": int, "track": int|null, "bbox": [x0, y0, x1, y1],
     "conf": float, "class": str}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .detector import Detector, get_detector
from .tiles import TileGrid, load_tile_plan, map_box_to_global, plan_grid
from .tracker import GreedyTracker, box_iou

Box = tuple[float, float, float, float]


@dataclass
class AdapterConfig:
    detector: str = "blob"
    confidence_threshold: float = 0.25
    tile_plan: Optional[Union[str, Path]] = None  # engine-exported plan JSON
    tile_w: int = 640
    tile_h: int = 640
    overlap: float = 0.25
    nms_iou: float = 0.5
    detector_input: Optional[tuple[int, int]] = None  # resize tiles to (w, h)
    merge: bool = True  # False: emit per-tile side file instead of merging
    track: bool = False
    detector_instance: Optional[Detector] = None

    def build_detector(self) -> Detector:
        return self.detector_instance or get_detector(self.detector)


def _grid_for(config: AdapterConfig, frame_w: int, frame_h: int) -> TileGrid:
    if config.tile_plan is not None:
        grid = load_tile_plan(config.tile_plan)
        if grid.frame_w != frame_w or grid.frame_h != frame_h:
            raise ValueError(
                f"tile plan is for {grid.frame_w}x{grid.frame_h}, frames are {frame_w}x{frame_h}"
            )
        return grid
    return plan_grid(
        frame_w, frame_h, min(config.tile_w, frame_w), min(config.tile_h, frame_h), config.overlap
    )


def _touches_interior_edge(
    box: Box,
    patch_w: float,
    patch_h: float,
    tile: Box,
    frame_w: int,
    frame_h: int,
    margin: float = 1.0,
) -> bool:
    """True when a detector-space box is clipped by a non-frame tile edge.

    Objects cut by an interior tile boundary are seen whole by the adjacent
    overlapping tile (the plan's overlap exceeds the object extent), so the
    clipped partials are dropped rather than merged.
    """
    if box[0] <= margin and tile[0] > 0:
        return True
    if box[1] <= margin and tile[1] > 0:
        return True
    if box[2] >= patch_w - margin and tile[2] < frame_w:
        return True
    if box[3] >= patch_h - margin and tile[3] < frame_h:
        return True
    return False


def _nms(entries: list[tuple[Box, float, str]], iou_threshold: float) -> list[tuple[Box, float, str]]:
    """Greedy class-aware suppression; survivors pairwise IoU <= threshold."""
    survivors = []
    by_class: dict[str, list[tuple[Box, float, str]]] = {}
    for entry in entries:
        by_class.setdefault(entry[2], []).append(entry)
    for label in sorted(by_class):
        kept: list[tuple[Box, float, str]] = []
        for entry in sorted(by_class[label], key=lambda e: (-e[1], e[0])):
            if all(box_iou(entry[0], k[0]) <= iou_threshold for k in kept):
                kept.append(entry)
        survivors.extend(kept)
    return survivors


def detect_and_emit(
    frames_dir: Union[str, Path],
    out_dir: Union[str, Path],
    config: AdapterConfig | None = None,
) -> Path:
    """Run the detector over every frame in the directory; write detections.jsonl.

    Also writes an output manifest declaring the merge mode, detector and
    tiling parameters; in per-tile mode the unmerged results are stored in
    ``detections_per_tile.json`` keyed by frame and tile index.
    """
    from PIL import Image
    import cv2

    config = config or AdapterConfig()
    frames_dir = Path(frames_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    store_manifest = json.loads((frames_dir / "manifest.json").read_text(encoding="utf-8"))
    frame_w, frame_h = int(store_manifest["width"]), int(store_manifest["height"])
    grid = _grid_for(config, frame_w, frame_h)
    detector = config.build_detector()
    tracker = GreedyTracker() if config.track else None

    frame_paths = sorted(frames_dir.glob("[0-9]" * 6 + ".*"))
    per_tile_dump: dict[str, list] = {}
    n_records = 0

    with (out / "detections.jsonl").open("w", encoding="utf-8") as sink:
        for path in frame_paths:
            frame_index = int(path.stem)
            image = np.asarray(Image.open(path).convert("RGB"))
            collected: list[tuple[Box, float, str]] = []
            tile_results = []
            for tile in grid.tiles:
                x0, y0, x1, y1 = (int(v) for v in tile)
                patch = image[y0:y1, x0:x1]
                scale_x = scale_y = 1.0
                if config.detector_input is not None:
                    in_w, in_h = config.detector_input
                    scale_x = in_w / patch.shape[1]
                    scale_y = in_h / patch.shape[0]
                    patch = cv2.resize(patch, (in_w, in_h), interpolation=cv2.INTER_LINEAR)
                patch_h_px, patch_w_px = patch.shape[:2]
                raw = [
                    d
                    for d in detector.detect(patch)
                    if d.confidence >= config.confidence_threshold
                    and not _touches_interior_edge(
                        d.box, patch_w_px, patch_h_px, tile, frame_w, frame_h
                    )
                ]
                tile_results.append(
                    {
                        "tile": list(tile),
                        "detections": [
                            {"bbox": list(d.box), "conf": d.confidence, "class": d.label}
                            for d in raw
                        ],
                    }
                )
                for d in raw:
                    collected.append(
                        (map_box_to_global(d.box, tile, scale_x, scale_y), d.confidence, d.label)
                    )
            if config.merge:
                final = _nms(collected, config.nms_iou)
                final.sort(key=lambda e: (e[0][0], e[0][1]))
                ids: list[Optional[int]] = [None] * len(final)
                if tracker is not None:
                    ids = list(tracker.assign([e[0] for e in final]))
                for (box, conf, label), tid in zip(final, ids):
                    record = {
                        "frame": frame_index,
                        "track": tid,
                        "bbox": [round(v, 4) for v in box],
                        "conf": round(conf, 4),
                        "class": label,
                    }
                    sink.write(json.dumps(record) + "\n")
                    n_records += 1
            else:
                per_tile_dump[str(frame_index)] = tile_results

    if not config.merge:
        (out / "detections_per_tile.json").write_text(
            json.dumps(per_tile_dump), encoding="utf-8"
        )

    manifest = {
        "source_frames": str(frames_dir),
        "frame_w": frame_w,
        "frame_h": frame_h,
        "frames": len(frame_paths),
        "records": n_records,
        "mode": "merged" if config.merge else "per_tile",
        "detector": config.detector if config.detector_instance is None else "custom",
        "confidence_threshold": config.confidence_threshold,
        "tracked": config.track,
        "tiling": {
            "tile_w": grid.tile_w,
            "tile_h": grid.tile_h,
            "overlap": grid.overlap,
            "nms_iou": config.nms_iou,
            "tiles": len(grid.tiles),
        },
    }
    (out / "adapter_manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return out / "detections.jsonl"
