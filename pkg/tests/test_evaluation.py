import numpy as np
import pytest

from vibes.bayes import SurpriseScore
from vibes.errors import MetricUndefinedError, ParameterError
from vibes.evaluation import (
    auc_roc,
    auc_roc_bruteforce,
    frame_scores,
    lqr_efps,
    match_events,
    recall_from_matches,
    semantic_accuracy,
    score_timeline_svg,
)
from vibes.localization import TriggerPacket
from vibes.simulator import GroundTruth, GroundTruthEvent


def packet(t_a: int, ego: int) -> TriggerPacket:
    return TriggerPacket(
        t_a=t_a,
        ego_id=ego,
        member_ids=(),
        window=(max(0, t_a - 5), t_a + 5),
        crop_boxes={},
        scores=SurpriseScore(1.0, 0.0, 1.0),
        diagnostics={},
    )


def event(vehicle: int, onset: int, end: int, kind: str = "sudden_stop") -> GroundTruthEvent:
    return GroundTruthEvent(vehicle=vehicle, kind=kind, onset=onset, end=end)


# ------------------------------------------------------------------- matching


def test_match_inside_window():
    matches = match_events([packet(55, 3)], [event(3, 50, 70)], tol=10)
    assert matches[0].matched
    assert recall_from_matches(matches) == 1.0


def test_wrong_vehicle_never_matches():
    matches = match_events([packet(55, 4)], [event(3, 50, 70)], tol=10)
    assert not matches[0].matched
    assert recall_from_matches(matches) == 0.0


def test_one_packet_matches_only_nearest_event():
    events = [event(3, 40, 50), event(3, 58, 70)]
    matches = match_events([packet(55, 3)], events, tol=20)
    matched = [m for m in matches if m.matched]
    assert len(matched) == 1
    assert matched[0].event.onset == 58  # distance 3 vs 5
    assert recall_from_matches(matches) == 0.5


def test_tolerance_boundaries():
    assert match_events([packet(39, 1)], [event(1, 50, 60)], tol=10)[0].matched is False
    assert match_events([packet(40, 1)], [event(1, 50, 60)], tol=10)[0].matched
    assert match_events([packet(69, 1)], [event(1, 50, 60)], tol=10)[0].matched
    assert match_events([packet(70, 1)], [event(1, 50, 60)], tol=10)[0].matched is False


def test_recall_monotone_in_tolerance():
    rng = np.random.default_rng(2)
    for _ in range(20):
        events = [
            event(int(v), int(o), int(o) + 10)
            for v, o in zip(rng.integers(0, 5, 6), rng.integers(0, 300, 6))
        ]
        packets = [packet(int(t), int(v)) for t, v in zip(rng.integers(0, 320, 8), rng.integers(0, 5, 8))]
        last = 0.0
        for tol in (0, 5, 10, 20, 40, 80):
            r = recall_from_matches(match_events(packets, events, tol=tol))
            assert r >= last - 1e-12
            last = r


def test_match_rejects_negative_tolerance():
    with pytest.raises(ParameterError):
        match_events([], [], tol=-1)


# ------------------------------------------------------------------------ AUC


def test_auc_perfect_separation():
    assert auc_roc([1.0, 0.0], [True, False]) == 1.0


def test_auc_all_ties_is_half():
    assert auc_roc([0.5, 0.5, 0.5, 0.5], [True, False, True, False]) == 0.5


def test_auc_hand_counted_pairs():
    # pairs: (.9>.5),(.9>.1),(.4<.5),(.4>.1) -> 3/4
    scores = [0.9, 0.4, 0.5, 0.1]
    labels = [True, True, False, False]
    assert auc_roc(scores, labels) == 0.75
    assert auc_roc_bruteforce(scores, labels) == 0.75


def test_auc_single_class_undefined():
    with pytest.raises(MetricUndefinedError):
        auc_roc([1.0, 2.0], [True, True])
    with pytest.raises(MetricUndefinedError):
        auc_roc_bruteforce([1.0, 2.0], [False, False])


def test_auc_equals_bruteforce_oracle_exactly():
    rng = np.random.default_rng(14)
    for _ in range(60):
        n = int(rng.integers(2, 200))
        scores = rng.choice([0.0, 0.1, 0.25, 0.5, 0.7, 1.3], size=n)
        labels = rng.random(n) < 0.4
        if labels.all() or not labels.any():
            continue
        assert auc_roc(scores, labels) == auc_roc_bruteforce(scores, labels)


# ------------------------------------------------------------------ LQR/eFPS


def test_lqr_from_paper_scale_example():
    lqr, _ = lqr_efps(1000, 25, 10.0, 0.0)
    assert lqr == 0.025


def test_lqr_zero_when_nothing_sent():
    lqr, _ = lqr_efps(1000, 0, 10.0, 0.0)
    assert lqr == 0.0


def test_efps_arithmetic():
    _, efps = lqr_efps(1000, 25, 80.0, 20.0)
    assert efps == 10.0


def test_lqr_requires_frames():
    with pytest.raises(ParameterError):
        lqr_efps(0, 0, 1.0, 0.0)


# ----------------------------------------------------------------- semantics


def make_gt():
    return GroundTruth(
        duration=100,
        events=[GroundTruthEvent(0, "sudden_stop", 10, 30)],
        vehicle_classes={0: "bus"},
    )


def reports_for(match, incident="dangerous driving", secondary="sudden stop", vtype="bus"):
    return [
        {
            "packet": match.packet_id,
            "ok": True,
            "report": {
                "incident_type": incident,
                "secondary_type": secondary,
                "entities": [{"vehicle_type": vtype, "role": "ego"}],
                "packet_id": match.packet_id,
            },
        }
    ]


def test_semantic_accuracy_hierarchical_hit():
    gt = make_gt()
    matches = match_events([packet(12, 0)], gt.events, tol=10)
    event_acc, detail_acc = semantic_accuracy(reports_for(matches[0]), matches, gt)
    assert event_acc == 1.0 and detail_acc == 1.0


def test_semantic_accuracy_synonym_applied():
    gt = make_gt()
    matches = match_events([packet(12, 0)], gt.events, tol=10)
    reports = reports_for(matches[0], incident="nonsense", secondary="hard braking")
    event_acc, _ = semantic_accuracy(reports, matches, gt)
    assert event_acc == 1.0


def test_semantic_accuracy_both_wrong():
    gt = make_gt()
    matches = match_events([packet(12, 0)], gt.events, tol=10)
    reports = reports_for(matches[0], incident="congestion", secondary="weather", vtype="car")
    event_acc, detail_acc = semantic_accuracy(reports, matches, gt)
    assert event_acc == 0.0 and detail_acc == 0.0


def test_semantic_accuracy_none_without_reports():
    gt = make_gt()
    matches = match_events([packet(12, 0)], gt.events, tol=10)
    assert semantic_accuracy([], matches, gt) == (None, None)


# -------------------------------------------------------------------- helpers


def test_frame_scores_takes_max_over_tracks():
    rows = [(5, 1, 0.0, 0.0, 0.4), (5, 2, 0.0, 0.0, 0.9), (7, 1, 0.0, 0.0, 0.2)]
    scores = frame_scores(rows, 10)
    assert scores[5] == 0.9 and scores[7] == 0.2 and scores[0] == 0.0


def test_score_timeline_svg_writes_file(tmp_path):
    path = tmp_path / "timeline.svg"
    score_timeline_svg([0.0, 0.2, 1.5, 0.0], [2], path)
    text = path.read_text()
    assert text.startswith("<svg") and "polyline" in text
