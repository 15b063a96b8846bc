"""Sliced-inference geometry: overlapping tile plans and global NMS merge.

Pure functions; no detector is run here. A plan can be exported to JSON so an
external detection process can consume the exact same tile rectangles.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

from .errors import ParameterError
from .ingest import BBox, Detection, iou

_NO_TRACK = float("inf")


@dataclass(frozen=True)
class TilePlan:
    tile_w: int
    tile_h: int
    overlap: float
    frame_w: int
    frame_h: int
    tiles: tuple[BBox, ...]

    def to_dict(self) -> dict:
        return {
            "tile_w": self.tile_w,
            "tile_h": self.tile_h,
            "overlap": self.overlap,
            "frame_w": self.frame_w,
            "frame_h": self.frame_h,
            "tiles": [list(t.corners) for t in self.tiles],
        }

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    @classmethod
    def from_dict(cls, obj: dict) -> "TilePlan":
        return cls(
            tile_w=int(obj["tile_w"]),
            tile_h=int(obj["tile_h"]),
            overlap=float(obj["overlap"]),
            frame_w=int(obj["frame_w"]),
            frame_h=int(obj["frame_h"]),
            tiles=tuple(BBox(*corners) for corners in obj["tiles"]),
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "TilePlan":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _axis_origins(frame_dim: int, tile_dim: int, stride: int) -> list[int]:
    # Last tile shifts inward to keep full tile size instead of shrinking.
    origins = []
    x = 0
    while True:
        if x + tile_dim >= frame_dim:
            last = frame_dim - tile_dim
            if not origins or origins[-1] != last:
                origins.append(last)
            break
        origins.append(x)
        x += stride
    return origins


def plan_tiles(
    frame_w: int, frame_h: int, tile_w: int, tile_h: int, overlap: float
) -> TilePlan:
    """Plan overlapping tiles covering the frame, enumerated row-major."""
    if not (0 < tile_w <= frame_w and 0 < tile_h <= frame_h):
        raise ParameterError(
            f"tile {tile_w}x{tile_h} does not fit frame {frame_w}x{frame_h}"
        )
    if not (0.0 <= overlap < 1.0):
        raise ParameterError(f"overlap {overlap} outside [0, 1)")
    stride_x = tile_w - math.floor(overlap * tile_w)
    stride_y = tile_h - math.floor(overlap * tile_h)
    xs = _axis_origins(frame_w, tile_w, stride_x)
    ys = _axis_origins(frame_h, tile_h, stride_y)
    tiles = tuple(
        BBox(float(x), float(y), float(x + tile_w), float(y + tile_h))
        for y in ys
        for x in xs
    )
    return TilePlan(tile_w, tile_h, overlap, frame_w, frame_h, tiles)


def _nms_key(det: Detection):
    tid = det.track_id if det.track_id is not None else _NO_TRACK
    return (-det.confidence, tid, det.bbox.corners)


def nms(detections: Sequence[Detection], iou_threshold: float) -> list[Detection]:
    """Class-aware greedy NMS by descending confidence.

    Ties break on lower track id, then lexicographic bbox corners, making the
    survivor set invariant under input permutation.
    """
    survivors: list[Detection] = []
    by_class: dict[str, list[Detection]] = {}
    for det in detections:
        by_class.setdefault(det.class_label, []).append(det)
    for label in sorted(by_class):
        kept: list[Detection] = []
        for det in sorted(by_class[label], key=_nms_key):
            if all(iou(det.bbox, k.bbox) <= iou_threshold for k in kept):
                kept.append(det)
        survivors.extend(kept)
    return survivors


def merge_detections(
    per_tile: Iterable[tuple[BBox, Sequence[Detection]]],
    iou_threshold: float = 0.5,
) -> list[Detection]:
    """Translate tile-local detections to global coordinates and suppress duplicates.

    Tile-local boxes must lie within their tile's extent. Survivors are pairwise
    IoU <= iou_threshold within each class.
    """
    pooled: list[Detection] = []
    for tile, dets in per_tile:
        for det in dets:
            box = det.bbox
            if (
                box.x_min < -1e-9
                or box.y_min < -1e-9
                or box.x_max > tile.width + 1e-9
                or box.y_max > tile.height + 1e-9
            ):
                raise ParameterError(
                    f"tile-local bbox {box.corners} exceeds tile extent "
                    f"{tile.width}x{tile.height}"
                )
            pooled.append(
                Detection(
                    frame_index=det.frame_index,
                    bbox=box.translate(tile.x_min, tile.y_min),
                    confidence=det.confidence,
                    class_label=det.class_label,
                    track_id=det.track_id,
                )
            )
    return nms(pooled, iou_threshold)
