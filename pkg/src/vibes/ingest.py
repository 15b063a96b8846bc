"""Wire formats for detection streams and frame stores.

Canonical units are pixels and frames throughout the pipeline; physical time
enters only through the frame rate declared by a frame store manifest.

Detection JSONL schema (one object per line):
    {"frame": int, "track": int|null, "bbox": [x_min, y_min, x_max, y_max],
     "conf": float, "class": str}

MOTChallenge text (read-only importer): comma-separated
    frame,id,left,top,width,height,conf,...   with 1-based frame indices.
"""

from __future__ import annotations

import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Optional, Union

import numpy as np

from .errors import DecodeError, ParameterError, StreamOrderError


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in image coordinates, origin top-left, corners ordered."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ParameterError(
                f"degenerate bbox corners ({self.x_min}, {self.y_min}, "
                f"{self.x_max}, {self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    @property
    def corners(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def to_center_form(self) -> tuple[float, float, float, float]:
        cx, cy = self.center
        return (cx, cy, self.width, self.height)

    @classmethod
    def from_center_form(cls, cx: float, cy: float, w: float, h: float) -> "BBox":
        return cls(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)

    def translate(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def clamp(self, frame_w: float, frame_h: float) -> "BBox":
        """Clip to frame bounds; raises if nothing remains inside the frame."""
        x0 = min(max(self.x_min, 0.0), frame_w)
        y0 = min(max(self.y_min, 0.0), frame_h)
        x1 = min(max(self.x_max, 0.0), frame_w)
        y1 = min(max(self.y_max, 0.0), frame_h)
        if not (x0 < x1 and y0 < y1):
            raise ParameterError(f"bbox {self.corners} lies outside {frame_w}x{frame_h} frame")
        return BBox(x0, y0, x1, y1)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union > 0.0 else 0.0


@dataclass(frozen=True)
class Detection:
    frame_index: int
    bbox: BBox
    confidence: float
    class_label: str
    track_id: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "frame_index", int(self.frame_index))
        object.__setattr__(self, "confidence", float(self.confidence))
        if self.frame_index < 0:
            raise ParameterError(f"negative frame index {self.frame_index}")
        if not (0.0 <= self.confidence <= 1.0):
            raise ParameterError(f"confidence {self.confidence} outside [0, 1]")


@dataclass
class IngestReport:
    """Per-run accounting of what the reader accepted and skipped."""

    lines_read: int = 0
    records_ok: int = 0
    records_skipped: int = 0
    batches: int = 0
    skip_reasons: Counter = field(default_factory=Counter)

    def to_dict(self) -> dict:
        return {
            "lines_read": self.lines_read,
            "records_ok": self.records_ok,
            "records_skipped": self.records_skipped,
            "batches": self.batches,
            "skip_reasons": dict(self.skip_reasons),
        }


Source = Union[str, Path, bytes, IO]


def _open_lines(source: Source) -> Iterator[str]:
    if isinstance(source, (str, Path)):
        path = Path(source)
        try:
            handle = path.open("r", encoding="utf-8")
        except OSError as exc:
            raise DecodeError(f"unreadable detection source {path}: {exc}") from exc
        with handle:
            yield from handle
    elif isinstance(source, bytes):
        yield from io.StringIO(source.decode("utf-8"))
    else:
        for line in source:
            yield line.decode("utf-8") if isinstance(line, bytes) else line


def _parse_jsonl_record(line: str) -> Detection:
    obj = json.loads(line)
    if not isinstance(obj, dict):
        raise ValueError("record is not an object")
    frame = obj["frame"]
    if not isinstance(frame, int) or isinstance(frame, bool) or frame < 0:
        raise ValueError(f"bad frame index {frame!r}")
    box = obj["bbox"]
    if not (isinstance(box, (list, tuple)) and len(box) == 4):
        raise ValueError("bbox is not a 4-list")
    corners = [float(v) for v in box]
    if any(not math.isfinite(v) for v in corners):
        raise ValueError("non-finite bbox corner")
    conf = float(obj["conf"])
    label = obj["class"]
    if not isinstance(label, str) or not label:
        raise ValueError("missing class label")
    track = obj.get("track")
    if track is not None and (not isinstance(track, int) or isinstance(track, bool)):
        raise ValueError(f"bad track id {track!r}")
    return Detection(frame, BBox(*corners), conf, label, track)


def _parse_mot_record(line: str) -> Detection:
    parts = line.split(",")
    if len(parts) < 7:
        raise ValueError(f"expected >=7 comma fields, got {len(parts)}")
    frame_1based = int(parts[0])
    if frame_1based < 1:
        raise ValueError(f"MOT frame {frame_1based} is not 1-based")
    track = int(parts[1])
    left, top, w, h = (float(v) for v in parts[2:6])
    conf = float(parts[6])
    return Detection(
        frame_index=frame_1based - 1,
        bbox=BBox(left, top, left + w, top + h),
        confidence=min(max(conf, 0.0), 1.0),
        class_label="vehicle",
        track_id=None if track < 0 else track,
    )


def iter_detection_batches(
    source: Source,
    fmt: str = "jsonl",
    report: Optional[IngestReport] = None,
) -> Iterator[tuple[int, list[Detection]]]:
    """Yield (frame_index, detections) batches in strictly ascending frame order.

    Malformed records are counted into ``report`` and skipped; a frame-index
    regression raises :class:`StreamOrderError` naming the offending line.
    """
    if fmt not in ("jsonl", "mot"):
        raise ParameterError(f"unknown stream format {fmt!r}")
    parse = _parse_jsonl_record if fmt == "jsonl" else _parse_mot_record
    rep = report if report is not None else IngestReport()

    current_frame: Optional[int] = None
    batch: list[Detection] = []
    for lineno, raw in enumerate(_open_lines(source), start=1):
        line = raw.strip()
        if not line:
            continue
        rep.lines_read += 1
        try:
            det = parse(line)
        except (ValueError, KeyError, TypeError, ParameterError) as exc:
            rep.records_skipped += 1
            rep.skip_reasons[type(exc).__name__] += 1
            continue
        rep.records_ok += 1
        if current_frame is None:
            current_frame = det.frame_index
        elif det.frame_index < current_frame:
            raise StreamOrderError(
                f"frame index regressed from {current_frame} to {det.frame_index} "
                f"at line {lineno}"
            )
        elif det.frame_index > current_frame:
            rep.batches += 1
            yield current_frame, batch
            current_frame = det.frame_index
            batch = []
        batch.append(det)
    if current_frame is not None:
        rep.batches += 1
        yield current_frame, batch


def read_detection_stream(
    source: Source, fmt: str = "jsonl"
) -> tuple[list[tuple[int, list[Detection]]], IngestReport]:
    """Eagerly read a whole stream; returns (batches, ingest report)."""
    report = IngestReport()
    batches = list(iter_detection_batches(source, fmt=fmt, report=report))
    return batches, report


def detection_to_json(det: Detection) -> str:
    record = {
        "frame": det.frame_index,
        "track": det.track_id,
        "bbox": list(det.bbox.corners),
        "conf": det.confidence,
        "class": det.class_label,
    }
    return json.dumps(record)


def write_detections_jsonl(
    batches: Iterable[tuple[int, list[Detection]]],
    dest: Union[str, Path, IO],
) -> None:
    """Serialize batches to the canonical JSONL schema (deterministic bytes)."""
    own = isinstance(dest, (str, Path))
    handle = Path(dest).open("w", encoding="utf-8") if own else dest
    try:
        for _, dets in batches:
            for det in dets:
                handle.write(detection_to_json(det))
                handle.write("\n")
    finally:
        if own:
            handle.close()


MANIFEST_NAME = "manifest.json"
FRAME_PATTERN = "%06d"
_FRAME_EXTS = (".png", ".jpg", ".jpeg")


class FrameStore:
    """Directory of zero-padded numbered frames plus a manifest declaring H, W, fps.

    A small decode cache covers overlapping trigger windows re-reading the
    same frames; memory stays bounded at ``cache_size`` rasters.
    """

    def __init__(self, root: Union[str, Path], cache_size: int = 12):
        self._cache: "dict[int, np.ndarray]" = {}
        self._cache_size = cache_size
        self.root = Path(root)
        manifest_path = self.root / MANIFEST_NAME
        try:
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise DecodeError(f"missing frame store manifest {manifest_path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise DecodeError(f"corrupt frame store manifest {manifest_path}: {exc}") from exc
        try:
            self.width = int(manifest["width"])
            self.height = int(manifest["height"])
            self.fps = float(manifest["fps"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DecodeError(f"manifest {manifest_path} missing width/height/fps") from exc

    @classmethod
    def create(
        cls, root: Union[str, Path], width: int, height: int, fps: float
    ) -> "FrameStore":
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        manifest = {"width": int(width), "height": int(height), "fps": float(fps)}
        (root / MANIFEST_NAME).write_text(json.dumps(manifest), encoding="utf-8")
        return cls(root)

    def frame_path(self, frame_index: int) -> Optional[Path]:
        stem = FRAME_PATTERN % frame_index
        for ext in _FRAME_EXTS:
            candidate = self.root / (stem + ext)
            if candidate.exists():
                return candidate
        return None

    def put(self, frame_index: int, raster: np.ndarray) -> Path:
        from PIL import Image

        self._cache.pop(frame_index, None)
        path = self.root / ((FRAME_PATTERN % frame_index) + ".png")
        Image.fromarray(raster).save(path)
        return path

    def resolve(self, frame_index: int) -> Optional[np.ndarray]:
        """Decoded H x W x 3 raster, or None when the frame is absent."""
        from PIL import Image

        cached = self._cache.get(frame_index)
        if cached is not None:
            return cached
        path = self.frame_path(frame_index)
        if path is None:
            return None
        try:
            with Image.open(path) as img:
                raster = np.asarray(img.convert("RGB"))
        except Exception as exc:
            raise DecodeError(f"frame {frame_index} ({path}) failed to decode: {exc}") from exc
        if raster.shape[0] != self.height or raster.shape[1] != self.width:
            raise DecodeError(
                f"frame {frame_index} has shape {raster.shape[:2]}, manifest declares "
                f"({self.height}, {self.width})"
            )
        if len(self._cache) >= self._cache_size:
            self._cache.pop(next(iter(self._cache)))
        self._cache[frame_index] = raster
        return raster
