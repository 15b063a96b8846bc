"""Tile-plan consumption and coordinate mapping.

Plans come from the engine's ``plan-tiles`` export (JSON) or are computed
inline with the same geometry rule: stride = tile - floor(overlap * tile),
last row/column shifted inward to keep full tile size.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

Box = tuple[float, float, float, float]  # x_min, y_min, x_max, y_max


@dataclass(frozen=True)
class TileGrid:
    tile_w: int
    tile_h: int
    overlap: float
    frame_w: int
    frame_h: int
    tiles: tuple[Box, ...]


def _origins(frame_dim: int, tile_dim: int, stride: int) -> list[int]:
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


def plan_grid(frame_w: int, frame_h: int, tile_w: int, tile_h: int, overlap: float) -> TileGrid:
    if not (0 < tile_w <= frame_w and 0 < tile_h <= frame_h):
        raise ValueError(f"tile {tile_w}x{tile_h} does not fit {frame_w}x{frame_h}")
    if not (0.0 <= overlap < 1.0):
        raise ValueError(f"overlap {overlap} outside [0, 1)")
    stride_x = tile_w - math.floor(overlap * tile_w)
    stride_y = tile_h - math.floor(overlap * tile_h)
    tiles = tuple(
        (float(x), float(y), float(x + tile_w), float(y + tile_h))
        for y in _origins(frame_h, tile_h, stride_y)
        for x in _origins(frame_w, tile_w, stride_x)
    )
    return TileGrid(tile_w, tile_h, overlap, frame_w, frame_h, tiles)


def load_tile_plan(path: Union[str, Path]) -> TileGrid:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return TileGrid(
        tile_w=int(obj["tile_w"]),
        tile_h=int(obj["tile_h"]),
        overlap=float(obj["overlap"]),
        frame_w=int(obj["frame_w"]),
        frame_h=int(obj["frame_h"]),
        tiles=tuple(tuple(float(v) for v in corners) for corners in obj["tiles"]),
    )


def map_box_to_global(box: Box, tile: Box, scale_x: float = 1.0, scale_y: float = 1.0) -> Box:
    """Detector-space box (possibly on a resized tile) back to frame coordinates."""
    return (
        box[0] / scale_x + tile[0],
        box[1] / scale_y + tile[1],
        box[2] / scale_x + tile[0],
        box[3] / scale_y + tile[1],
    )


def map_box_to_tile_local(box: Box, tile: Box, scale_x: float = 1.0, scale_y: float = 1.0) -> Box:
    """Frame-coordinate box into (possibly resized) tile detector space."""
    return (
        (box[0] - tile[0]) * scale_x,
        (box[1] - tile[1]) * scale_y,
        (box[2] - tile[0]) * scale_x,
        (box[3] - tile[1]) * scale_y,
    )
