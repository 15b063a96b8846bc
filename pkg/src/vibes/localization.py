"""Trigger packets: deduplicated anomaly events with per-frame crop boxes.

A positive ego surprise opens a pending trigger; once the future edge of its
temporal window has streamed past, the packet is assembled from track history
and (when a frame store is available) crop images are extracted and written
next to a JSON manifest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

from .bayes import SurpriseScore
from .errors import ParameterError
from .ingest import BBox, FrameStore
from .kinematics import Track

MANIFEST_NAME = "manifest.json"


def should_trigger(
    s_ego: float,
    last_trigger_frame: Optional[int],
    tau_cool: int,
    t: int,
) -> bool:
    """Positive surprise fires a trigger unless within the per-track cooldown."""
    if s_ego <= 0.0:
        return False
    return last_trigger_frame is None or t - last_trigger_frame >= tau_cool


def enclosing_box(
    boxes: Sequence[BBox],
    pad: float,
    frame_w: float,
    frame_h: float,
) -> BBox:
    """Corner-wise minimum enclosing box, padded and clamped to the frame.

    Padding adds ``pad * max(width, height)`` pixels on every side of the raw
    enclosure before clamping.
    """
    if not boxes:
        raise ParameterError("enclosing_box requires at least one box")
    x0 = min(b.x_min for b in boxes)
    y0 = min(b.y_min for b in boxes)
    x1 = max(b.x_max for b in boxes)
    y1 = max(b.y_max for b in boxes)
    margin = pad * max(x1 - x0, y1 - y0)
    return BBox(x0 - margin, y0 - margin, x1 + margin, y1 + margin).clamp(frame_w, frame_h)


@dataclass(frozen=True)
class TriggerPacket:
    t_a: int
    ego_id: int
    member_ids: tuple[int, ...]  # K = {ego} | neighborhood at t_a
    window: tuple[int, int]  # inclusive [start, end]
    crop_boxes: dict[int, BBox]
    scores: SurpriseScore
    diagnostics: dict
    truncated: bool = False
    flags: tuple[str, ...] = ()
    crop_files: dict[int, str] = field(default_factory=dict)

    @property
    def packet_id(self) -> str:
        return f"packet_{self.t_a:06d}_track{self.ego_id}"

    def to_manifest(self) -> dict:
        return {
            "packet_id": self.packet_id,
            "t_a": self.t_a,
            "ego_id": self.ego_id,
            "member_ids": list(self.member_ids),
            "window": list(self.window),
            "scores": self.scores.to_dict(),
            "diagnostics": self.diagnostics,
            "crop_boxes": {str(f): list(b.corners) for f, b in sorted(self.crop_boxes.items())},
            "crops": [
                {"frame": f, "file": name} for f, name in sorted(self.crop_files.items())
            ],
            "truncated": self.truncated,
            "flags": list(self.flags),
        }


def packet_from_manifest(obj: dict) -> TriggerPacket:
    scores = obj.get("scores", {})
    return TriggerPacket(
        t_a=int(obj["t_a"]),
        ego_id=int(obj["ego_id"]),
        member_ids=tuple(obj.get("member_ids", [])),
        window=(int(obj["window"][0]), int(obj["window"][1])),
        crop_boxes={int(f): BBox(*c) for f, c in obj.get("crop_boxes", {}).items()},
        scores=SurpriseScore(
            s_par=float(scores.get("s_par", 0.0)),
            s_perp=float(scores.get("s_perp", 0.0)),
            s_ego=float(scores.get("s_ego", 0.0)),
        ),
        diagnostics=obj.get("diagnostics", {}),
        truncated=bool(obj.get("truncated", False)),
        flags=tuple(obj.get("flags", [])),
        crop_files={int(c["frame"]): c["file"] for c in obj.get("crops", [])},
    )


def load_packet(packet_dir: Union[str, Path]) -> TriggerPacket:
    path = Path(packet_dir) / MANIFEST_NAME
    return packet_from_manifest(json.loads(path.read_text(encoding="utf-8")))


def assemble_packet(
    t_a: int,
    ego_id: int,
    member_ids: Sequence[int],
    scores: SurpriseScore,
    diagnostics: dict,
    tracks: Mapping[int, Track],
    tau_p: int,
    tau_f: int,
    pad: float,
    frame_w: float,
    frame_h: float,
    end_frame: Optional[int] = None,
) -> TriggerPacket:
    """Build the packet's temporal window and per-frame minimal crop boxes.

    The window is [t_a - tau_p, t_a + tau_f] clamped to the stream bounds.
    Frames where no member of K was observed reuse the nearest frame's box
    (ties prefer the earlier frame). ``end_frame`` truncates the future edge
    when the stream ended before the window completed.
    """
    start = max(0, t_a - tau_p)
    end = t_a + tau_f
    truncated = False
    if end_frame is not None and end_frame < end:
        end = end_frame
        truncated = True
    kset = {ego_id, *member_ids}

    crop_boxes: dict[int, BBox] = {}
    for t in range(start, end + 1):
        boxes = []
        for tid in kset:
            track = tracks.get(tid)
            if track is not None:
                box = track.bboxes.get(t)
                if box is not None:
                    boxes.append(box)
        if boxes:
            crop_boxes[t] = enclosing_box(boxes, pad, frame_w, frame_h)

    flags: list[str] = []
    if not crop_boxes:
        raise ParameterError(
            f"no member of K observed anywhere in window [{start}, {end}]"
        )
    covered = sorted(crop_boxes)
    for t in range(start, end + 1):
        if t not in crop_boxes:
            nearest = min(covered, key=lambda f: (abs(f - t), f))
            crop_boxes[t] = crop_boxes[nearest]
            if "reused_boxes" not in flags:
                flags.append("reused_boxes")

    return TriggerPacket(
        t_a=t_a,
        ego_id=ego_id,
        member_ids=tuple(sorted(kset - {ego_id})),
        window=(start, end),
        crop_boxes=crop_boxes,
        scores=scores,
        diagnostics=diagnostics,
        truncated=truncated,
        flags=tuple(flags),
    )


def write_packet(
    packet: TriggerPacket,
    out_dir: Union[str, Path],
    store: Optional[FrameStore] = None,
) -> tuple["TriggerPacket", Path]:
    """Persist the packet as a directory of crop images plus manifest.json.

    Crops are extracted only for frames the store can resolve; a packet whose
    window resolves zero frames is still written, flagged ``no_crops`` so the
    reasoning stage can skip it. Returns the finalized packet (crop file list
    attached) and its directory.
    """
    packet_dir = Path(out_dir) / packet.packet_id
    packet_dir.mkdir(parents=True, exist_ok=True)

    crop_files: dict[int, str] = {}
    flags = list(packet.flags)
    if store is not None:
        from PIL import Image

        for t in range(packet.window[0], packet.window[1] + 1):
            raster = store.resolve(t)
            if raster is None:
                continue
            box = packet.crop_boxes[t]
            x0, y0 = int(box.x_min), int(box.y_min)
            x1, y1 = max(x0 + 1, int(round(box.x_max))), max(y0 + 1, int(round(box.y_max)))
            crop = raster[y0:y1, x0:x1]
            name = f"crop_{t:06d}.png"
            Image.fromarray(crop).save(packet_dir / name)
            crop_files[t] = name
        if not crop_files:
            flags.append("no_crops")
    else:
        flags.append("no_store")

    final = TriggerPacket(
        t_a=packet.t_a,
        ego_id=packet.ego_id,
        member_ids=packet.member_ids,
        window=packet.window,
        crop_boxes=packet.crop_boxes,
        scores=packet.scores,
        diagnostics=packet.diagnostics,
        truncated=packet.truncated,
        flags=tuple(flags),
        crop_files=crop_files,
    )
    manifest_path = packet_dir / MANIFEST_NAME
    manifest_path.write_text(
        json.dumps(final.to_manifest(), indent=2, sort_keys=True), encoding="utf-8"
    )
    return final, packet_dir
