"""Synthetic expressway scenes with exact kinematic ground truth.

Vehicles advance along straight or arc lane geometry at jittered nominal
speed; boxes shrink linearly with distance along the lane (1.0 at the near
edge down to 0.15 at the far edge) to mimic far-field perspective. Anomalies
are closed-form kinematic overrides, so ground-truth labels are exact by
construction. Identical spec + seed produces byte-identical output.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ParameterError
from .ingest import BBox, Detection, FrameStore, write_detections_jsonl

ANOMALY_KINDS = ("sudden_stop", "lateral_swerve", "speeding", "wrong_way", "abnormal_stop")
_STOP_KINDS = ("sudden_stop", "abnormal_stop")
_FAR_SCALE = 0.15
_SWERVE_PERIOD = 20.0  # frames per full lateral oscillation
_DETECTION_CONF = 0.92

_CLASS_DIMS = {"car": (44.0, 26.0), "truck": (56.0, 32.0), "bus": (62.0, 34.0)}
_CLASS_PROBS = {"car": 0.7, "truck": 0.2, "bus": 0.1}


@dataclass(frozen=True)
class StraightGeometry:
    angle_deg: float
    lane_width: float = 40.0

    kind = "straight"

    def to_dict(self) -> dict:
        return {"kind": "straight", "angle_deg": self.angle_deg, "lane_width": self.lane_width}


@dataclass(frozen=True)
class ArcGeometry:
    center: tuple[float, float]
    radius: float
    start_deg: float
    span_deg: float
    lane_width: float = 40.0

    kind = "arc"

    def to_dict(self) -> dict:
        return {
            "kind": "arc",
            "center": list(self.center),
            "radius": self.radius,
            "start_deg": self.start_deg,
            "span_deg": self.span_deg,
            "lane_width": self.lane_width,
        }


def geometry_from_dict(obj: dict):
    if obj["kind"] == "straight":
        return StraightGeometry(angle_deg=float(obj["angle_deg"]), lane_width=float(obj.get("lane_width", 40.0)))
    if obj["kind"] == "arc":
        return ArcGeometry(
            center=(float(obj["center"][0]), float(obj["center"][1])),
            radius=float(obj["radius"]),
            start_deg=float(obj["start_deg"]),
            span_deg=float(obj["span_deg"]),
            lane_width=float(obj.get("lane_width", 40.0)),
        )
    raise ParameterError(f"unknown lane geometry kind {obj.get('kind')!r}")


@dataclass(frozen=True)
class AnomalyEvent:
    kind: str
    vehicle: int
    onset: int
    duration: int
    magnitude: float

    def __post_init__(self):
        if self.kind not in ANOMALY_KINDS:
            raise ParameterError(f"unknown anomaly kind {self.kind!r}")
        if self.duration < 1:
            raise ParameterError(f"anomaly duration {self.duration} must be >= 1")

    @property
    def end(self) -> int:
        return self.onset + self.duration

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "vehicle": self.vehicle,
            "onset": self.onset,
            "duration": self.duration,
            "magnitude": self.magnitude,
        }


@dataclass
class ScenarioSpec:
    lanes: int
    geometry: Union[StraightGeometry, ArcGeometry]
    vehicles: int
    nominal_speed: float
    speed_jitter: float
    spawn_rate: float
    duration: int
    frame_w: int
    frame_h: int
    seed: int
    anomalies: list[AnomalyEvent] = field(default_factory=list)
    flow_shift: Optional[tuple[int, float]] = None  # (frame, speed factor)
    fps: float = 10.0
    initial_fraction: float = 0.6  # share of vehicles pre-placed at frame 0

    def validate(self) -> None:
        if self.lanes < 1 or self.vehicles < 1 or self.duration < 2:
            raise ParameterError("scenario needs >=1 lane, >=1 vehicle, >=2 frames")
        if self.nominal_speed <= 0 or self.speed_jitter < 0:
            raise ParameterError("nominal speed must be positive, jitter non-negative")
        for event in self.anomalies:
            if event.vehicle < 0 or event.vehicle >= self.vehicles:
                raise ParameterError(f"anomaly targets unknown vehicle {event.vehicle}")
            if event.end > self.duration:
                raise ParameterError(
                    f"anomaly [{event.onset}, {event.end}) exceeds duration {self.duration}"
                )

    def to_dict(self) -> dict:
        return {
            "lanes": self.lanes,
            "geometry": self.geometry.to_dict(),
            "vehicles": self.vehicles,
            "nominal_speed": self.nominal_speed,
            "speed_jitter": self.speed_jitter,
            "spawn_rate": self.spawn_rate,
            "duration": self.duration,
            "frame_w": self.frame_w,
            "frame_h": self.frame_h,
            "seed": self.seed,
            "anomalies": [a.to_dict() for a in self.anomalies],
            "flow_shift": list(self.flow_shift) if self.flow_shift else None,
            "fps": self.fps,
            "initial_fraction": self.initial_fraction,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ScenarioSpec":
        shift = obj.get("flow_shift")
        return cls(
            lanes=int(obj["lanes"]),
            geometry=geometry_from_dict(obj["geometry"]),
            vehicles=int(obj["vehicles"]),
            nominal_speed=float(obj["nominal_speed"]),
            speed_jitter=float(obj["speed_jitter"]),
            spawn_rate=float(obj["spawn_rate"]),
            duration=int(obj["duration"]),
            frame_w=int(obj["frame_w"]),
            frame_h=int(obj["frame_h"]),
            seed=int(obj["seed"]),
            anomalies=[
                AnomalyEvent(
                    kind=a["kind"],
                    vehicle=int(a["vehicle"]),
                    onset=int(a["onset"]),
                    duration=int(a["duration"]),
                    magnitude=float(a["magnitude"]),
                )
                for a in obj.get("anomalies", [])
            ],
            flow_shift=(int(shift[0]), float(shift[1])) if shift else None,
            fps=float(obj.get("fps", 10.0)),
            initial_fraction=float(obj.get("initial_fraction", 0.6)),
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ScenarioSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")


@dataclass(frozen=True)
class GroundTruthEvent:
    vehicle: int
    kind: str
    onset: int
    end: int  # exclusive

    def to_dict(self) -> dict:
        return {"vehicle": self.vehicle, "kind": self.kind, "onset": self.onset, "end": self.end}


@dataclass
class GroundTruth:
    duration: int
    events: list[GroundTruthEvent]
    vehicle_classes: dict[int, str] = field(default_factory=dict)

    def frame_flags(self) -> np.ndarray:
        """Per-frame flag: any vehicle anomalous at that frame."""
        flags = np.zeros(self.duration, dtype=bool)
        for event in self.events:
            flags[event.onset : event.end] = True
        return flags

    def flags_for(self, vehicle: int) -> np.ndarray:
        flags = np.zeros(self.duration, dtype=bool)
        for event in self.events:
            if event.vehicle == vehicle:
                flags[event.onset : event.end] = True
        return flags

    def to_dict(self) -> dict:
        return {
            "duration": self.duration,
            "events": [e.to_dict() for e in self.events],
            "vehicle_classes": {str(k): v for k, v in self.vehicle_classes.items()},
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "GroundTruth":
        return cls(
            duration=int(obj["duration"]),
            events=[
                GroundTruthEvent(
                    vehicle=int(e["vehicle"]),
                    kind=e["kind"],
                    onset=int(e["onset"]),
                    end=int(e["end"]),
                )
                for e in obj["events"]
            ],
            vehicle_classes={int(k): v for k, v in obj.get("vehicle_classes", {}).items()},
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "GroundTruth":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")


@dataclass(frozen=True)
class VehicleState:
    vehicle: int
    frame: int
    center: tuple[float, float]
    bbox: BBox
    s: float
    along_speed: float  # signed speed along the lane, px/frame
    lat_velocity: float  # px/frame
    visible: bool


@dataclass
class SimulationResult:
    spec: ScenarioSpec
    batches: list[tuple[int, list[Detection]]]
    ground_truth: GroundTruth
    states: list[list[VehicleState]]  # per frame, visible-or-not vehicle states

    def write(self, out_dir: Union[str, Path]) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_detections_jsonl(self.batches, out / "detections.jsonl")
        self.ground_truth.save(out / "gt.json")
        self.spec.save(out / "scenario.json")
        return out


class _Lane:
    """One drivable line with arc-length parameterization."""

    def __init__(self, geometry, lane_index: int, lanes: int, frame_w: int, frame_h: int):
        offset = (lane_index - (lanes - 1) / 2.0) * geometry.lane_width
        self._geometry = geometry
        if isinstance(geometry, StraightGeometry):
            theta = math.radians(geometry.angle_deg)
            self._d = (math.cos(theta), math.sin(theta))
            self._n = (-math.sin(theta), math.cos(theta))
            self.length = frame_w * abs(self._d[0]) + frame_h * abs(self._d[1])
            cx, cy = frame_w / 2.0, frame_h / 2.0
            self._p0 = (
                cx - self._d[0] * self.length / 2.0 + self._n[0] * offset,
                cy - self._d[1] * self.length / 2.0 + self._n[1] * offset,
            )
        else:
            self._radius = geometry.radius + offset
            self._phi0 = math.radians(geometry.start_deg)
            self._sign = 1.0 if geometry.span_deg >= 0 else -1.0
            self.length = abs(math.radians(geometry.span_deg)) * self._radius

    def point(self, s: float) -> tuple[float, float]:
        if isinstance(self._geometry, StraightGeometry):
            return (self._p0[0] + self._d[0] * s, self._p0[1] + self._d[1] * s)
        phi = self._phi0 + self._sign * s / self._radius
        cx, cy = self._geometry.center
        return (cx + self._radius * math.cos(phi), cy + self._radius * math.sin(phi))

    def tangent(self, s: float) -> tuple[float, float]:
        if isinstance(self._geometry, StraightGeometry):
            return self._d
        phi = self._phi0 + self._sign * s / self._radius
        return (-self._sign * math.sin(phi), self._sign * math.cos(phi))

    def normal(self, s: float) -> tuple[float, float]:
        tx, ty = self.tangent(s)
        return (-ty, tx)


def _base_speed(spec: ScenarioSpec, t: int) -> float:
    if spec.flow_shift is not None and t >= spec.flow_shift[0]:
        return spec.nominal_speed * spec.flow_shift[1]
    return spec.nominal_speed


def _vehicle_plan(spec: ScenarioSpec, rng: np.random.Generator, lanes: list["_Lane"]):
    """Per-vehicle draws: lane, class, dims, initial position, spawn frame.

    Initial vehicles occupy spaced slots along their lane and later spawns
    keep a per-lane headway, so distinct vehicles never materialize on top of
    each other (the simulator has no car-following model to separate them).
    """
    n, T = spec.vehicles, spec.duration
    lane_idx = rng.integers(0, spec.lanes, size=n)
    labels = rng.choice(list(_CLASS_PROBS), size=n, p=list(_CLASS_PROBS.values()))
    dim_jitter = rng.uniform(0.9, 1.1, size=(n, 2))
    n_initial = max(1, int(round(n * spec.initial_fraction)))
    slot_jitter = rng.uniform(0.0, 1.0, size=n)
    gaps = rng.exponential(1.0 / max(spec.spawn_rate, 1e-6), size=n)

    spawn = np.zeros(n, dtype=int)
    s_init = np.zeros(n)
    for lane in range(spec.lanes):
        members = [i for i in range(n_initial) if lane_idx[i] == lane]
        m = len(members)
        for k, i in enumerate(members):
            frac = 0.08 + (k + 0.3 + 0.4 * slot_jitter[i]) / m * 0.78
            s_init[i] = frac * lanes[lane].length

    headway = int(math.ceil(1.6 * max(w for w, _ in _CLASS_DIMS.values()) / spec.nominal_speed))
    last_spawn = {lane: -headway for lane in range(spec.lanes)}
    t_cursor = 1.0
    for i in range(n_initial, n):
        t_cursor += gaps[i]
        lane = int(lane_idx[i])
        frame = max(int(t_cursor), last_spawn[lane] + headway)
        spawn[i] = min(frame, T - 1)
        last_spawn[lane] = spawn[i]
    return lane_idx, labels, dim_jitter, s_init, spawn, n_initial


def simulate(spec: ScenarioSpec) -> SimulationResult:
    """Run the scenario; deterministic for a given spec + seed."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, T = spec.vehicles, spec.duration

    lanes = [_Lane(spec.geometry, l, spec.lanes, spec.frame_w, spec.frame_h) for l in range(spec.lanes)]
    lane_idx, labels, dim_jitter, s_init, spawn, _ = _vehicle_plan(spec, rng, lanes)
    jitter = rng.normal(0.0, spec.speed_jitter, size=(n, T)) if spec.speed_jitter > 0 else np.zeros((n, T))

    events_by_vehicle: dict[int, list[AnomalyEvent]] = {}
    for event in spec.anomalies:
        events_by_vehicle.setdefault(event.vehicle, []).append(event)

    s = s_init.copy()
    lat = np.zeros(n)
    prev_lat = np.zeros(n)
    speed_now = np.zeros(n)
    alive = np.zeros(n, dtype=bool)
    parked = np.zeros(n, dtype=bool)  # stop-kind targets stay stopped after the event

    batches: list[tuple[int, list[Detection]]] = []
    states: list[list[VehicleState]] = []

    for t in range(T):
        frame_states: list[VehicleState] = []
        detections: list[Detection] = []
        base = _base_speed(spec, t)
        for i in range(n):
            if t < spawn[i]:
                continue
            if t == spawn[i]:
                alive[i] = True
                speed_now[i] = base
            if not alive[i]:
                continue

            lane = lanes[lane_idx[i]]
            event = None
            for cand in events_by_vehicle.get(i, ()):
                if cand.onset <= t < cand.end:
                    event = cand
                    break

            lat_v = 0.0
            if parked[i] and event is None:
                speed_now[i] = 0.0
            elif event is None:
                speed_now[i] = base + jitter[i, t]
            elif event.kind in _STOP_KINDS:
                speed_now[i] = max(0.0, speed_now[i] - event.magnitude)
                if t == event.end - 1:
                    parked[i] = True
            elif event.kind == "speeding":
                speed_now[i] = base * event.magnitude + jitter[i, t]
            elif event.kind == "wrong_way":
                speed_now[i] = -base * event.magnitude + jitter[i, t]
            elif event.kind == "lateral_swerve":
                speed_now[i] = base + jitter[i, t]
                omega = 2.0 * math.pi / _SWERVE_PERIOD
                lat[i] = (event.magnitude / omega) * math.sin(omega * (t - event.onset + 1))

            s[i] += speed_now[i]
            lat_v = lat[i] - prev_lat[i]
            prev_lat[i] = lat[i]

            if s[i] < 0.0 or s[i] > lane.length:
                alive[i] = False
                continue

            px, py = lane.point(s[i])
            nx, ny = lane.normal(s[i])
            cx, cy = px + nx * lat[i], py + ny * lat[i]
            scale = 1.0 - (1.0 - _FAR_SCALE) * (s[i] / lane.length)
            w0, h0 = _CLASS_DIMS[labels[i]]
            w = w0 * dim_jitter[i, 0] * scale
            h = h0 * dim_jitter[i, 1] * scale
            bbox = BBox.from_center_form(cx, cy, w, h)
            visible = (
                bbox.x_min >= 0.0
                and bbox.y_min >= 0.0
                and bbox.x_max <= spec.frame_w
                and bbox.y_max <= spec.frame_h
            )
            frame_states.append(
                VehicleState(
                    vehicle=i,
                    frame=t,
                    center=(cx, cy),
                    bbox=bbox,
                    s=s[i],
                    along_speed=speed_now[i],
                    lat_velocity=lat_v,
                    visible=visible,
                )
            )
            if visible:
                detections.append(
                    Detection(
                        frame_index=t,
                        bbox=bbox,
                        confidence=_DETECTION_CONF,
                        class_label=str(labels[i]),
                        track_id=i,
                    )
                )
        states.append(frame_states)
        batches.append((t, detections))

    gt = GroundTruth(
        duration=T,
        events=[GroundTruthEvent(e.vehicle, e.kind, e.onset, e.end) for e in spec.anomalies],
        vehicle_classes={i: str(labels[i]) for i in range(n)},
    )
    result = SimulationResult(spec=spec, batches=batches, ground_truth=gt, states=states)
    _verify_label_soundness(result)
    return result


def _verify_label_soundness(result: SimulationResult) -> None:
    """Every injected anomaly must deviate >= 3 sigma from nominal at some frame.

    Computed analytically from generator state, independent of any tracker, so
    detectability is a property of the data rather than the detector.
    """
    spec = result.spec
    threshold = max(3.0 * spec.speed_jitter, 1e-6)
    by_frame: dict[tuple[int, int], VehicleState] = {}
    for frame_states in result.states:
        for st in frame_states:
            by_frame[(st.frame, st.vehicle)] = st
    for event in spec.anomalies:
        deviation = 0.0
        for t in range(event.onset, event.end):
            st = by_frame.get((t, event.vehicle))
            if st is None:
                continue
            base = _base_speed(spec, t)
            if event.kind == "lateral_swerve":
                deviation = max(deviation, abs(st.lat_velocity))
            else:
                deviation = max(deviation, abs(st.along_speed - base))
        if deviation < threshold:
            raise ParameterError(
                f"anomaly {event.kind} on vehicle {event.vehicle} deviates only "
                f"{deviation:.3f} px/frame (< 3 sigma = {threshold:.3f}); increase magnitude"
            )


_BG = np.array([38, 40, 43], dtype=np.uint8)
_LANE_MARK = np.array([96, 96, 102], dtype=np.uint8)
_CLASS_COLORS = {
    "car": np.array([66, 120, 245], dtype=np.uint8),
    "truck": np.array([80, 200, 120], dtype=np.uint8),
    "bus": np.array([250, 180, 60], dtype=np.uint8),
}


def render_frames(
    result: SimulationResult,
    out_dir: Union[str, Path],
    draw_lanes: bool = True,
) -> FrameStore:
    """Rasterize the scene into a frame store: flat road, markings, filled boxes."""
    spec = result.spec
    store = FrameStore.create(out_dir, spec.frame_w, spec.frame_h, spec.fps)
    lanes = [_Lane(spec.geometry, l, spec.lanes, spec.frame_w, spec.frame_h) for l in range(spec.lanes)]
    background = np.tile(_BG, (spec.frame_h, spec.frame_w, 1))
    if draw_lanes:
        for lane in lanes:
            steps = int(lane.length // 6) + 1
            for k in range(steps):
                px, py = lane.point(k * 6.0)
                x, y = int(px), int(py)
                if 0 <= x < spec.frame_w - 1 and 0 <= y < spec.frame_h - 1:
                    background[y : y + 2, x : x + 2] = _LANE_MARK

    for t, frame_states in enumerate(result.states):
        canvas = background.copy()
        for st in frame_states:
            if not st.visible:
                continue
            color = _CLASS_COLORS[result.ground_truth.vehicle_classes[st.vehicle]]
            x0, y0 = int(st.bbox.x_min), int(st.bbox.y_min)
            x1, y1 = int(math.ceil(st.bbox.x_max)), int(math.ceil(st.bbox.y_max))
            canvas[max(0, y0) : y1, max(0, x0) : x1] = color
        store.put(t, canvas)
    return store


def sample_scenario(
    seed: int,
    kinds: Sequence[str] = ANOMALY_KINDS,
    n_anomalies: tuple[int, int] = (1, 3),
    n_vehicles: tuple[int, int] = (10, 30),
    geometry: str = "mix",
    duration: int = 360,
    frame_w: int = 1920,
    frame_h: int = 1080,
    nominal_speed: float = 10.0,
    speed_jitter: float = 0.12,
    flow_shift: Optional[tuple[int, float]] = None,
    fps: float = 10.0,
) -> ScenarioSpec:
    """Draw a valid random scenario; anomaly windows are scheduled on-screen.

    With ``kinds=()`` or ``n_anomalies=(0, 0)`` the scenario is nominal-only.
    """
    rng = np.random.default_rng(seed ^ 0x5EED)
    n = int(rng.integers(n_vehicles[0], n_vehicles[1] + 1))
    lanes = int(rng.integers(2, 5))

    geo_kind = geometry if geometry != "mix" else ("arc" if seed % 2 else "straight")
    if geo_kind == "straight":
        angle = float(rng.choice([0.0, 20.0, 160.0, 180.0, 35.0]))
        geo: Union[StraightGeometry, ArcGeometry] = StraightGeometry(angle_deg=angle)
    else:
        # Expressway curvature is gentle relative to the camera field; tighter
        # arcs make the platoon-edge tangent offset exceed nominal jitter.
        radius = float(rng.uniform(8800.0, 11500.0))
        delta = math.degrees(math.asin(min(0.95, (frame_w / 2.0 + 80.0) / radius)))
        flip = bool(rng.integers(0, 2))
        geo = ArcGeometry(
            center=(frame_w / 2.0, frame_h / 2.0 + radius),
            radius=radius,
            start_deg=(-90.0 - delta) if not flip else (-90.0 + delta),
            span_deg=(2 * delta) if not flip else (-2 * delta),
        )

    spec = ScenarioSpec(
        lanes=lanes,
        geometry=geo,
        vehicles=n,
        nominal_speed=nominal_speed,
        speed_jitter=speed_jitter,
        spawn_rate=max(0.05, n / (duration * 0.45)),
        duration=duration,
        frame_w=frame_w,
        frame_h=frame_h,
        seed=seed,
        flow_shift=flow_shift,
        fps=fps,
    )

    if not kinds or n_anomalies[1] < 1:
        spec.validate()
        return spec

    # Replay the simulator's layout draws to know where targets will start.
    lane_objs = [_Lane(geo, l, lanes, frame_w, frame_h) for l in range(lanes)]
    lane_len = lane_objs[0].length
    probe = np.random.default_rng(seed)
    _, _, _, s0, _, n_initial = _vehicle_plan(spec, probe, lane_objs)

    k = int(rng.integers(n_anomalies[0], n_anomalies[1] + 1))
    taken: set[int] = set()
    events: list[AnomalyEvent] = []
    for _ in range(k):
        kind = str(rng.choice(list(kinds)))
        # Stop-kind windows cover the deceleration transient; the parked
        # aftermath is kinematically quiescent and not labeled anomalous.
        duration_evt, magnitude = {
            "sudden_stop": (12, float(rng.uniform(2.8, 4.0))),
            "abnormal_stop": (16, float(rng.uniform(1.4, 1.9))),
            "lateral_swerve": (30, float(rng.uniform(2.5, 4.0))),
            "speeding": (30, float(rng.uniform(1.7, 2.2))),
            "wrong_way": (15, 1.0),
        }[kind]
        placed = False
        for _attempt in range(40):
            target = int(rng.integers(0, n_initial))
            if target in taken:
                continue
            s_start = s0[target]
            speed_mult = magnitude if kind == "speeding" else 1.0
            lo = 30
            hi = min(
                duration - duration_evt - 8,
                int((0.90 * lane_len - s_start) / nominal_speed) - duration_evt,
            )
            if kind == "speeding":
                hi = min(
                    hi,
                    int(
                        (0.92 * lane_len - s_start - duration_evt * nominal_speed * speed_mult)
                        / nominal_speed
                    ),
                )
            if kind == "wrong_way":
                lo = max(lo, int((duration_evt * nominal_speed + 0.06 * lane_len - s_start) / nominal_speed) + 1)
            if hi <= lo:
                continue
            onset = int(rng.integers(lo, hi + 1))
            events.append(AnomalyEvent(kind, target, onset, duration_evt, magnitude))
            taken.add(target)
            placed = True
            break
        if not placed:
            continue
    if not events:
        raise ParameterError(f"could not place any anomaly for seed {seed}")
    spec.anomalies = events
    spec.validate()
    return spec
