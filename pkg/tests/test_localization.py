import numpy as np
import pytest

from vibes.bayes import SurpriseScore
from vibes.errors import ParameterError
from vibes.ingest import BBox, FrameStore
from vibes.kinematics import Track
from vibes.localization import (
    assemble_packet,
    enclosing_box,
    load_packet,
    should_trigger,
    write_packet,
)


def score(s_par=0.7, s_perp=0.0):
    return SurpriseScore(s_par=s_par, s_perp=s_perp, s_ego=max(s_par, s_perp))


def track_from_boxes(tid: int, boxes: dict[int, tuple]) -> Track:
    track = Track(track_id=tid)
    for frame, corners in sorted(boxes.items()):
        track.observe(frame, BBox(*corners))
    return track


# -------------------------------------------------------------------- trigger


def test_zero_score_never_triggers():
    assert not should_trigger(0.0, None, tau_cool=20, t=100)


def test_positive_score_triggers_without_history():
    assert should_trigger(0.7, None, tau_cool=20, t=100)


def test_cooldown_suppresses_retrigger():
    assert not should_trigger(0.7, 97, tau_cool=20, t=100)
    assert should_trigger(0.7, 80, tau_cool=20, t=100)


# -------------------------------------------------------------- enclosing box


def test_single_box_identity_at_zero_pad():
    box = BBox(5, 6, 15, 18)
    assert enclosing_box([box], 0.0, 100, 100) == box


def test_cornerwise_min_max():
    got = enclosing_box([BBox(0, 0, 10, 10), BBox(20, 5, 30, 15)], 0.0, 100, 100)
    assert got.corners == (0, 0, 30, 15)


def test_padding_adds_fraction_of_long_side():
    # raw enclosure 30x15 -> margin 0.1 * 30 = 3 px per side, clamped at 0
    got = enclosing_box([BBox(0, 0, 10, 10), BBox(20, 5, 30, 15)], 0.1, 100, 100)
    assert got.corners == (0, 0, 33, 18)


def test_empty_list_rejected():
    with pytest.raises(ParameterError):
        enclosing_box([], 0.0, 100, 100)


def test_containment_and_minimality_property():
    rng = np.random.default_rng(4)
    for _ in range(500):
        boxes = []
        for _ in range(int(rng.integers(1, 8))):
            x0, y0 = rng.uniform(0, 400, size=2)
            w, h = rng.uniform(1, 80, size=2)
            boxes.append(BBox(x0, y0, x0 + w, y0 + h))
        enc = enclosing_box(boxes, 0.0, 1000, 1000)
        for b in boxes:
            assert enc.x_min <= b.x_min and enc.y_min <= b.y_min
            assert enc.x_max >= b.x_max and enc.y_max >= b.y_max
        # minimality: shrinking any side by 1px breaks containment
        assert any(b.x_min < enc.x_min + 1 for b in boxes)
        assert any(b.y_min < enc.y_min + 1 for b in boxes)
        assert any(b.x_max > enc.x_max - 1 for b in boxes)
        assert any(b.y_max > enc.y_max - 1 for b in boxes)


# ------------------------------------------------------------------- assembly


def test_minimal_packet_single_frame():
    track = track_from_boxes(3, {50: (10, 10, 30, 26)})
    packet = assemble_packet(
        t_a=50, ego_id=3, member_ids=(), scores=score(), diagnostics={},
        tracks={3: track}, tau_p=0, tau_f=0, pad=0.0, frame_w=100, frame_h=100,
    )
    assert packet.window == (50, 50)
    assert packet.crop_boxes[50] == BBox(10, 10, 30, 26)


def test_window_clamps_at_stream_start():
    track = track_from_boxes(1, {t: (10 + t, 10, 30 + t, 26) for t in range(0, 13)})
    packet = assemble_packet(
        t_a=2, ego_id=1, member_ids=(), scores=score(), diagnostics={},
        tracks={1: track}, tau_p=10, tau_f=10, pad=0.0, frame_w=200, frame_h=100,
    )
    assert packet.window == (0, 12)


def test_end_frame_truncates_and_flags():
    track = track_from_boxes(1, {t: (10, 10, 30, 26) for t in range(0, 6)})
    packet = assemble_packet(
        t_a=5, ego_id=1, member_ids=(), scores=score(), diagnostics={},
        tracks={1: track}, tau_p=2, tau_f=10, pad=0.0, frame_w=100, frame_h=100,
        end_frame=5,
    )
    assert packet.window == (3, 5)
    assert packet.truncated


def test_crop_boxes_contain_all_member_boxes():
    rng = np.random.default_rng(6)
    tracks = {}
    for tid in range(4):
        boxes = {}
        x, y = rng.uniform(50, 400, size=2)
        for t in range(80, 121):
            x += rng.uniform(-3, 5)
            y += rng.uniform(-2, 2)
            boxes[t] = (x, y, x + 20, y + 12)
        tracks[tid] = track_from_boxes(tid, boxes)
    packet = assemble_packet(
        t_a=100, ego_id=0, member_ids=(1, 2, 3), scores=score(), diagnostics={},
        tracks=tracks, tau_p=10, tau_f=10, pad=0.0, frame_w=1000, frame_h=1000,
    )
    assert packet.window == (90, 110)
    assert len(packet.crop_boxes) == 21
    for t in range(90, 111):
        crop = packet.crop_boxes[t]
        for tid in (0, 1, 2, 3):
            box = tracks[tid].bboxes[t]
            assert crop.x_min <= box.x_min and crop.x_max >= box.x_max
            assert crop.y_min <= box.y_min and crop.y_max >= box.y_max


def test_frames_without_members_reuse_nearest_box():
    track = track_from_boxes(1, {98: (10, 10, 30, 26), 99: (12, 10, 32, 26),
                                 100: (14, 10, 34, 26), 101: (16, 10, 36, 26)})
    packet = assemble_packet(
        t_a=100, ego_id=1, member_ids=(), scores=score(), diagnostics={},
        tracks={1: track}, tau_p=5, tau_f=5, pad=0.0, frame_w=200, frame_h=100,
    )
    assert packet.crop_boxes[95] == packet.crop_boxes[98]
    assert packet.crop_boxes[105] == packet.crop_boxes[101]
    assert "reused_boxes" in packet.flags


def test_write_packet_with_store_and_reload(tmp_path):
    store = FrameStore.create(tmp_path / "frames", width=120, height=90, fps=10)
    for t in range(4, 9):
        raster = np.zeros((90, 120, 3), dtype=np.uint8)
        raster[20:40, 30:60] = (10 * t, 100, 50)
        store.put(t, raster)
    track = track_from_boxes(2, {t: (30, 20, 60, 40) for t in range(4, 9)})
    packet = assemble_packet(
        t_a=6, ego_id=2, member_ids=(), scores=score(), diagnostics={"v_par_eff": 1.0},
        tracks={2: track}, tau_p=2, tau_f=2, pad=0.0, frame_w=120, frame_h=90,
    )
    final, packet_dir = write_packet(packet, tmp_path / "packets", store)
    loaded = load_packet(packet_dir)
    assert loaded.to_manifest() == final.to_manifest()
    assert loaded.t_a == 6 and loaded.ego_id == 2
    assert loaded.window == (4, 8)
    assert len(loaded.crop_files) == 5
    for name in loaded.crop_files.values():
        assert (packet_dir / name).exists()


def test_write_packet_without_store_flags_no_store(tmp_path):
    track = track_from_boxes(2, {6: (30, 20, 60, 40)})
    packet = assemble_packet(
        t_a=6, ego_id=2, member_ids=(), scores=score(), diagnostics={},
        tracks={2: track}, tau_p=0, tau_f=0, pad=0.0, frame_w=120, frame_h=90,
    )
    _, packet_dir = write_packet(packet, tmp_path / "packets", None)
    loaded = load_packet(packet_dir)
    assert "no_store" in loaded.flags
    assert loaded.crop_files == {}
