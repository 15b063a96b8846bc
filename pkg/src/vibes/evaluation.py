"""Offline metrics over pipeline outputs: recall, AUC-ROC, LQR, eFPS, semantics.

AUC follows the rank-sum (Mann-Whitney) formulation: the probability that a
randomly chosen anomalous frame outscores a randomly chosen normal frame, with
ties counted half. A brute-force pairwise oracle is exported alongside for
verification on small inputs.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import MetricUndefinedError, ParameterError
from .localization import TriggerPacket, load_packet
from .simulator import GroundTruth, GroundTruthEvent


@dataclass
class EventMatch:
    event: GroundTruthEvent
    packet_id: Optional[str] = None
    t_a: Optional[int] = None
    distance: Optional[int] = None

    @property
    def matched(self) -> bool:
        return self.packet_id is not None

    def to_dict(self) -> dict:
        return {
            "vehicle": self.event.vehicle,
            "kind": self.event.kind,
            "onset": self.event.onset,
            "end": self.event.end,
            "packet_id": self.packet_id,
            "t_a": self.t_a,
            "distance": self.distance,
        }


def _temporal_distance(t_a: int, event: GroundTruthEvent) -> int:
    if event.onset <= t_a < event.end:
        return 0
    return min(abs(t_a - event.onset), abs(t_a - (event.end - 1)))


def match_events(
    packets: Sequence[TriggerPacket],
    events: Sequence[GroundTruthEvent],
    tol: int = 20,
) -> list[EventMatch]:
    """Greedy packet-to-event assignment by temporal distance.

    A packet is eligible for an event when its ego equals the event's vehicle
    and its trigger time lies within [onset - tol, end + tol]; each packet
    matches at most one event and vice versa.
    """
    if tol < 0:
        raise ParameterError(f"tolerance {tol} must be >= 0")
    matches = [EventMatch(event=e) for e in events]
    pairs = []
    for pi, packet in enumerate(packets):
        for ei, event in enumerate(events):
            if packet.ego_id != event.vehicle:
                continue
            if not (event.onset - tol <= packet.t_a <= event.end - 1 + tol):
                continue
            pairs.append((_temporal_distance(packet.t_a, event), pi, ei))
    pairs.sort()
    used_packets: set[int] = set()
    for distance, pi, ei in pairs:
        if pi in used_packets or matches[ei].matched:
            continue
        used_packets.add(pi)
        matches[ei].packet_id = packets[pi].packet_id
        matches[ei].t_a = packets[pi].t_a
        matches[ei].distance = distance
    return matches


def recall_from_matches(matches: Sequence[EventMatch]) -> float:
    if not matches:
        return 1.0
    return sum(1 for m in matches if m.matched) / len(matches)


def auc_roc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Rank-based AUC: (concordant pairs + half ties) / (positives * negatives)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape:
        raise ParameterError("scores and labels length mismatch")
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("AUC undefined: both classes must be present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=float)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # mean rank, 1-based
        i = j + 1
    rank_sum_pos = float(ranks[labels].sum())
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def auc_roc_bruteforce(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Quadratic pairwise oracle for auc_roc; use only on small inputs."""
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    if not pos or not neg:
        raise MetricUndefinedError("AUC undefined: both classes must be present")
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def lqr_efps(
    total_frames: int,
    reasoner_frames: int,
    scoring_wall_s: float,
    reasoner_wall_s: float,
) -> tuple[float, float]:
    """Query rate and effective throughput for one run.

    ``reasoner_frames`` counts unique frame indices inside emitted packet
    windows; eFPS divides total frames by the combined scoring and reasoning
    wall time attributable to the run.
    """
    if total_frames <= 0:
        raise ParameterError("total_frames must be positive")
    lqr = reasoner_frames / total_frames
    wall = scoring_wall_s + reasoner_wall_s
    efps = total_frames / wall if wall > 0 else float("inf")
    return lqr, efps


def load_synonyms() -> dict[str, list[str]]:
    with resources.files("vibes.data").joinpath("event_synonyms.json").open(
        "r", encoding="utf-8"
    ) as handle:
        return json.load(handle)


def _type_matches(reported: str, gt_kind: str, synonyms: dict[str, list[str]]) -> bool:
    reported = reported.strip().lower().replace("_", " ")
    canonical = gt_kind.strip().lower().replace("_", " ")
    if reported == canonical:
        return True
    equivalents = [s.lower() for s in synonyms.get(gt_kind, [])]
    return reported in equivalents


def semantic_accuracy(
    reports: Sequence[dict],
    matches: Sequence[EventMatch],
    gt: GroundTruth,
    synonyms: Optional[dict[str, list[str]]] = None,
) -> tuple[Optional[float], Optional[float]]:
    """Event-type and entity-detail accuracy over matched events with reports.

    A report scores an event hit when either its primary or secondary type
    matches the ground-truth kind (case-insensitive, synonym table applied),
    and a detail hit when at least one reported entity attribute matches the
    target vehicle's class. Returns (None, None) when nothing is comparable.
    """
    synonyms = synonyms if synonyms is not None else load_synonyms()
    by_packet = {}
    for record in reports:
        report = record.get("report") if "report" in record else record
        pid = record.get("packet") or (report or {}).get("packet_id")
        if record.get("ok", True) and report and pid:
            by_packet[pid] = report
    event_hits: list[int] = []
    detail_hits: list[int] = []
    for match in matches:
        if not match.matched or match.packet_id not in by_packet:
            continue
        report = by_packet[match.packet_id]
        kinds_reported = (report.get("incident_type", ""), report.get("secondary_type", ""))
        event_hits.append(
            1 if any(_type_matches(r, match.event.kind, synonyms) for r in kinds_reported) else 0
        )
        gt_class = gt.vehicle_classes.get(match.event.vehicle, "").lower()
        entities = report.get("entities", [])
        detail_hits.append(
            1
            if gt_class
            and any(str(e.get("vehicle_type", "")).lower() == gt_class for e in entities)
            else 0
        )
    if not event_hits:
        return None, None
    return (sum(event_hits) / len(event_hits), sum(detail_hits) / len(detail_hits))


@dataclass
class EvalReport:
    recall: float
    auc_roc: Optional[float]
    lqr: float
    efps: float
    event_acc: Optional[float] = None
    detail_acc: Optional[float] = None
    matches: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "recall": self.recall,
            "auc_roc": self.auc_roc,
            "lqr": self.lqr,
            "efps": self.efps,
            "event_acc": self.event_acc,
            "detail_acc": self.detail_acc,
            "matches": self.matches,
        }

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")


def read_score_log(path: Union[str, Path]) -> list[tuple[int, int, float, float, float]]:
    rows = []
    with Path(path).open("r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            rows.append(
                (
                    int(row["frame"]),
                    int(row["track"]),
                    float(row["s_par"]),
                    float(row["s_perp"]),
                    float(row["s_ego"]),
                )
            )
    return rows


def frame_scores(
    rows: Sequence[tuple[int, int, float, float, float]], duration: int
) -> np.ndarray:
    """Per-frame anomaly score: max s_ego across tracks, 0 where none scored."""
    scores = np.zeros(duration, dtype=float)
    for frame, _track, _sp, _sq, s_ego in rows:
        if 0 <= frame < duration and s_ego > scores[frame]:
            scores[frame] = s_ego
    return scores


def load_run_packets(run_dir: Union[str, Path]) -> list[TriggerPacket]:
    packets_dir = Path(run_dir) / "packets"
    if not packets_dir.is_dir():
        return []
    packets = []
    for manifest in sorted(packets_dir.glob("*/manifest.json")):
        packets.append(load_packet(manifest.parent))
    return packets


def evaluate_run(
    run_dir: Union[str, Path],
    gt: GroundTruth,
    reports: Optional[Sequence[dict]] = None,
    tol: int = 20,
) -> EvalReport:
    """Compute the full metric set for one pipeline run directory."""
    run_dir = Path(run_dir)
    packets = load_run_packets(run_dir)
    matches = match_events(packets, gt.events, tol=tol)

    stats = {}
    stats_path = run_dir / "run_stats.json"
    if stats_path.exists():
        stats = json.loads(stats_path.read_text(encoding="utf-8"))
    total_frames = int(stats.get("frames_processed", gt.duration))
    lqr, efps = lqr_efps(
        total_frames=max(total_frames, 1),
        reasoner_frames=int(stats.get("reasoner_frames", 0)),
        scoring_wall_s=float(stats.get("scoring_wall_s", 0.0)) or 1e-9,
        reasoner_wall_s=float(stats.get("reasoner_wall_s", 0.0)),
    )

    auc: Optional[float] = None
    score_path = run_dir / "scores.csv"
    if score_path.exists():
        rows = read_score_log(score_path)
        labels = gt.frame_flags()
        if labels.any() and not labels.all():
            auc = auc_roc(frame_scores(rows, gt.duration), labels)

    event_acc = detail_acc = None
    if reports is not None:
        event_acc, detail_acc = semantic_accuracy(reports, matches, gt)

    return EvalReport(
        recall=recall_from_matches(matches),
        auc_roc=auc,
        lqr=lqr,
        efps=efps,
        event_acc=event_acc,
        detail_acc=detail_acc,
        matches=[m.to_dict() for m in matches],
    )


def score_timeline_svg(
    scores: Sequence[float],
    trigger_frames: Sequence[int],
    path: Union[str, Path],
    width: int = 900,
    height: int = 220,
) -> None:
    """Tiny dependency-free SVG plot: score polyline plus trigger marks."""
    scores = list(scores)
    n = max(len(scores), 2)
    top = max(max(scores, default=0.0), 1e-9)
    margin = 24
    def sx(i: int) -> float:
        return margin + i * (width - 2 * margin) / (n - 1)
    def sy(v: float) -> float:
        return height - margin - v / top * (height - 2 * margin)
    points = " ".join(f"{sx(i):.1f},{sy(v):.1f}" for i, v in enumerate(scores))
    marks = "".join(
        f'<line x1="{sx(t):.1f}" y1="{margin}" x2="{sx(t):.1f}" y2="{height - margin}" '
        f'stroke="#d64545" stroke-dasharray="3,3"/>'
        for t in trigger_frames
        if 0 <= t < n
    )
    svg = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
        f'<rect width="100%" height="100%" fill="#ffffff"/>'
        f'<polyline fill="none" stroke="#2a6fdb" stroke-width="1.5" points="{points}"/>'
        f"{marks}"
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="#444"/>'
        f"</svg>"
    )
    Path(path).write_text(svg, encoding="utf-8")
