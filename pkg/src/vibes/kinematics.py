"""Track maintenance, velocity estimation and historical-window aggregation.

Velocities are raw adjacent-observation differences in pixels/frame; smoothing
happens at the window-aggregate level so that alternating lateral movements are
measured by the absolute maximum rather than nullified by averaging.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from .errors import InputError, StreamOrderError
from .ingest import BBox, Detection, iou


@dataclass
class Track:
    track_id: int
    class_label: str = "vehicle"
    positions: dict[int, tuple[float, float]] = field(default_factory=dict)
    bboxes: dict[int, BBox] = field(default_factory=dict)
    velocities: dict[int, tuple[float, float]] = field(default_factory=dict)
    first_frame: int = -1
    last_frame: int = -1
    misses: int = 0

    @property
    def age(self) -> int:
        """Frames actually observed for this track."""
        return len(self.positions)

    def observe(self, frame: int, bbox: BBox) -> None:
        if self.first_frame < 0:
            self.first_frame = frame
        self.positions[frame] = bbox.center
        self.bboxes[frame] = bbox
        self.last_frame = frame
        self.misses = 0

    def position(self, frame: int) -> Optional[tuple[float, float]]:
        return self.positions.get(frame)

    def velocity(self, frame: int) -> Optional[tuple[float, float]]:
        return self.velocities.get(frame)


def estimate_velocity(track: Track, t: int, delta_max: int = 5) -> Optional[tuple[float, float]]:
    """Displacement over the gap to the most recent prior observation.

    Returns None (velocity undefined) when no prior observation exists within
    the last ``delta_max`` frames; otherwise the result is recorded in the
    track's velocity history.
    """
    p_now = track.position(t)
    if p_now is None:
        return None
    for gap in range(1, delta_max + 1):
        p_prev = track.position(t - gap)
        if p_prev is not None:
            v = ((p_now[0] - p_prev[0]) / gap, (p_now[1] - p_prev[1]) / gap)
            track.velocities[t] = v
            return v
    return None


@dataclass(frozen=True)
class WindowAggregate:
    mean_v_par: float
    max_abs_v_perp: float
    var_v_perp: float
    window_len: int


def aggregate_window(components: Sequence[tuple[float, float]]) -> Optional[WindowAggregate]:
    """Aggregate (v_par, v_perp) samples over the historical window.

    Longitudinal motion is summarized by the mean; lateral motion by the
    absolute maximum plus population variance, which survives sign-alternating
    weaving that a plain mean would cancel. Empty windows are undefined.
    """
    if not components:
        return None
    n = len(components)
    pars = [c[0] for c in components]
    perps = [c[1] for c in components]
    mean_par = sum(pars) / n
    mean_perp = sum(perps) / n
    var_perp = sum((v - mean_perp) ** 2 for v in perps) / n
    return WindowAggregate(
        mean_v_par=mean_par,
        max_abs_v_perp=max(abs(v) for v in perps),
        var_v_perp=var_perp,
        window_len=n,
    )


class Tracker:
    """Greedy IoU association with explicit-id passthrough.

    Detections carrying a track id are associated by identity; the rest are
    matched greedily by descending IoU (one-to-one, gated) against each
    track's box extrapolated at constant velocity, which keeps small fast
    targets associable when raw displacement exceeds box size. Tracks
    unmatched for more than ``tau_lost`` frames are retired.
    """

    def __init__(self, iou_gate: float = 0.3, tau_lost: int = 10, delta_max: int = 5):
        self.iou_gate = iou_gate
        self.tau_lost = tau_lost
        self.delta_max = delta_max
        self.tracks: dict[int, Track] = {}
        self._next_id = 0
        self._last_frame = -1

    @staticmethod
    def _predicted_box(track: Track, frame: int) -> BBox:
        last_box = track.bboxes[track.last_frame]
        velocity = track.velocities.get(track.last_frame)
        if velocity is None:
            return last_box
        gap = frame - track.last_frame
        return last_box.translate(velocity[0] * gap, velocity[1] * gap)

    def _spawn(self, det: Detection, frame: int, track_id: Optional[int] = None) -> Track:
        tid = track_id if track_id is not None else self._next_id
        self._next_id = max(self._next_id, tid + 1)
        track = Track(track_id=tid, class_label=det.class_label)
        track.observe(frame, det.bbox)
        self.tracks[tid] = track
        return track

    def step(self, frame: int, detections: Sequence[Detection]) -> tuple[list[Track], list[Track]]:
        """Associate one frame's detections; returns (updated tracks, retired tracks)."""
        if frame <= self._last_frame:
            raise StreamOrderError(
                f"tracker fed frame {frame} after frame {self._last_frame}"
            )
        self._last_frame = frame

        explicit = [d for d in detections if d.track_id is not None]
        anonymous = [d for d in detections if d.track_id is None]
        seen_ids = set()
        for det in explicit:
            if det.track_id in seen_ids:
                raise InputError(f"duplicate track id {det.track_id} in frame {frame}")
            seen_ids.add(det.track_id)

        updated: list[Track] = []
        matched_tracks: set[int] = set()
        for det in explicit:
            track = self.tracks.get(det.track_id)
            if track is None:
                track = self._spawn(det, frame, det.track_id)
            else:
                track.observe(frame, det.bbox)
            matched_tracks.add(track.track_id)
            updated.append(track)

        if anonymous:
            candidates = []
            for tid, track in self.tracks.items():
                if tid in matched_tracks:
                    continue
                predicted = self._predicted_box(track, frame)
                for di, det in enumerate(anonymous):
                    overlap = iou(predicted, det.bbox)
                    if overlap >= self.iou_gate:
                        candidates.append((-overlap, tid, di))
            candidates.sort()
            matched_dets: set[int] = set()
            for neg_overlap, tid, di in candidates:
                if tid in matched_tracks or di in matched_dets:
                    continue
                track = self.tracks[tid]
                track.observe(frame, anonymous[di].bbox)
                matched_tracks.add(tid)
                matched_dets.add(di)
                updated.append(track)
            for di, det in enumerate(anonymous):
                if di not in matched_dets:
                    updated.append(self._spawn(det, frame))

        retired: list[Track] = []
        for tid in list(self.tracks):
            if tid in matched_tracks or self.tracks[tid].last_frame == frame:
                continue
            track = self.tracks[tid]
            track.misses += 1
            if track.misses > self.tau_lost:
                retired.append(self.tracks.pop(tid))
        return updated, retired
