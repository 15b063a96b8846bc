import json

import numpy as np
import pytest

from perception_adapter.detector import BlobDetector, get_detector
from perception_adapter.emit import AdapterConfig, _nms, detect_and_emit
from perception_adapter.frames import VideoError, extract_frames, select_frame_indices, write_manifest
from perception_adapter.tiles import (
    load_tile_plan,
    map_box_to_global,
    map_box_to_tile_local,
    plan_grid,
)
from perception_adapter.tracker import GreedyTracker, box_iou


# -------------------------------------------------------------------- frames


def test_select_every_third_frame_for_30_to_10():
    assert select_frame_indices(30.0, 10.0, 10) == [0, 3, 6, 9]


def test_select_keeps_all_when_target_at_or_above_source():
    assert select_frame_indices(10.0, 10.0, 4) == [0, 1, 2, 3]
    assert select_frame_indices(10.0, 30.0, 4) == [0, 1, 2, 3]


def test_select_fractional_step():
    # 25 -> 10 fps: step 2.5 -> 0, 2, 5, 8, 10, ...
    assert select_frame_indices(25.0, 10.0, 12) == [0, 2, 5, 8, 10]


def test_extract_unreadable_video_names_file(tmp_path):
    with pytest.raises(VideoError) as err:
        extract_frames(tmp_path / "missing.mp4", tmp_path / "frames")
    assert "missing.mp4" in str(err.value)


def test_extract_frames_from_generated_video(tmp_path):
    cv2 = pytest.importorskip("cv2")
    video_path = tmp_path / "clip.avi"
    writer = cv2.VideoWriter(
        str(video_path), cv2.VideoWriter_fourcc(*"MJPG"), 30.0, (64, 48)
    )
    if not writer.isOpened():
        pytest.skip("no MJPG encoder available")
    for i in range(30):
        frame = np.full((48, 64, 3), 30, dtype=np.uint8)
        frame[10:20, (i * 2) % 50 : (i * 2) % 50 + 10] = (0, 0, 255)
        writer.write(frame)
    writer.release()

    out = extract_frames(video_path, tmp_path / "frames", target_fps=10.0)
    frames = sorted(out.glob("*.png"))
    assert len(frames) == 10  # every 3rd of 30
    assert frames[0].name == "000000.png"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest == {"width": 64, "height": 48, "fps": 10.0}


# --------------------------------------------------------------------- tiles


def test_plan_grid_matches_engine_geometry():
    grid = plan_grid(100, 100, 60, 60, 0.5)
    xs = sorted({t[0] for t in grid.tiles})
    assert xs == [0, 30, 40]
    assert len(grid.tiles) == 9


def test_tile_plan_file_round_trip(tmp_path):
    grid = plan_grid(1280, 720, 640, 640, 0.25)
    plan = {
        "tile_w": grid.tile_w,
        "tile_h": grid.tile_h,
        "overlap": grid.overlap,
        "frame_w": grid.frame_w,
        "frame_h": grid.frame_h,
        "tiles": [list(t) for t in grid.tiles],
    }
    path = tmp_path / "plan.json"
    path.write_text(json.dumps(plan))
    loaded = load_tile_plan(path)
    assert loaded == grid


def test_tile_coordinate_round_trip_with_resize():
    rng = np.random.default_rng(5)
    for _ in range(200):
        tile = (float(rng.integers(0, 500)), float(rng.integers(0, 500)), 0.0, 0.0)
        tile = (tile[0], tile[1], tile[0] + 320, tile[1] + 256)
        scale_x = float(rng.uniform(0.5, 3.0))
        scale_y = float(rng.uniform(0.5, 3.0))
        x0, y0 = rng.uniform(0, 200, size=2)
        w, h = rng.uniform(1, 100, size=2)
        box = (tile[0] + x0, tile[1] + y0, tile[0] + x0 + w, tile[1] + y0 + h)
        local = map_box_to_tile_local(box, tile, scale_x, scale_y)
        back = map_box_to_global(local, tile, scale_x, scale_y)
        assert max(abs(a - b) for a, b in zip(box, back)) <= 1e-6


# ------------------------------------------------------------------ detector


def test_blob_detector_recovers_rectangles():
    image = np.full((120, 160, 3), (38, 40, 43), dtype=np.uint8)
    image[20:36, 30:58] = (66, 120, 245)
    image[80:92, 100:124] = (80, 200, 120)
    dets = BlobDetector().detect(image)
    boxes = sorted(d.box for d in dets)
    assert boxes == [(30.0, 20.0, 58.0, 36.0), (100.0, 80.0, 124.0, 92.0)]


def test_blob_detector_empty_road():
    image = np.full((120, 160, 3), (38, 40, 43), dtype=np.uint8)
    assert BlobDetector().detect(image) == []


def test_blob_detector_ignores_speckle():
    image = np.full((120, 160, 3), (38, 40, 43), dtype=np.uint8)
    image[5:7, 5:7] = (96, 96, 102)  # lane-marking-sized dot
    assert BlobDetector().detect(image) == []


def test_detector_registry():
    assert isinstance(get_detector("blob"), BlobDetector)
    with pytest.raises(ValueError):
        get_detector("yolo-nonexistent")


# ------------------------------------------------------------------- tracker


def test_tracker_keeps_id_across_overlapping_frames():
    tracker = GreedyTracker(iou_gate=0.3)
    ids_a = tracker.assign([(0, 0, 10, 10)])
    ids_b = tracker.assign([(2, 0, 12, 10)])
    assert ids_a == ids_b


def test_tracker_spawns_for_disjoint_box():
    tracker = GreedyTracker(iou_gate=0.3)
    a = tracker.assign([(0, 0, 10, 10)])[0]
    b = tracker.assign([(50, 50, 60, 60)])[0]
    assert a != b


def test_box_iou_matches_hand_geometry():
    assert abs(box_iou((10, 10, 20, 20), (11, 11, 21, 21)) - 81 / 119) <= 1e-12


# ----------------------------------------------------------------------- nms


def test_nms_dedups_and_keeps_higher_confidence():
    entries = [
        ((0.0, 0.0, 10.0, 10.0), 0.9, "vehicle"),
        ((0.5, 0.0, 10.5, 10.0), 0.7, "vehicle"),
        ((40.0, 40.0, 50.0, 50.0), 0.8, "vehicle"),
    ]
    kept = _nms(entries, 0.5)
    assert len(kept) == 2
    assert max(k[1] for k in kept) == 0.9


# ----------------------------------------------------------- emit end to end


def synthetic_frames(tmp_path, n_frames=3, size=(200, 140)):
    from PIL import Image

    frames_dir = tmp_path / "frames"
    frames_dir.mkdir()
    boxes = []
    for t in range(n_frames):
        image = np.full((size[1], size[0], 3), (38, 40, 43), dtype=np.uint8)
        x = 20 + 12 * t
        image[30:50, x : x + 30] = (66, 120, 245)
        image[90:104, 120:146] = (80, 200, 120)
        Image.fromarray(image).save(frames_dir / f"{t:06d}.png")
        boxes.append([(x, 30, x + 30, 50), (120, 90, 146, 104)])
    write_manifest(frames_dir, size[0], size[1], 10.0)
    return frames_dir, boxes


def test_detect_and_emit_merged(tmp_path):
    frames_dir, boxes = synthetic_frames(tmp_path)
    config = AdapterConfig(tile_w=128, tile_h=128, overlap=0.3)
    jsonl = detect_and_emit(frames_dir, tmp_path / "out", config)
    records = [json.loads(line) for line in jsonl.read_text().splitlines()]
    by_frame = {}
    for rec in records:
        by_frame.setdefault(rec["frame"], []).append(rec)
    assert set(by_frame) == {0, 1, 2}
    for t, expected in enumerate(boxes):
        got = sorted(tuple(r["bbox"]) for r in by_frame[t])
        assert len(got) == 2
        for g, e in zip(got, sorted(expected)):
            assert max(abs(a - b) for a, b in zip(g, e)) <= 2.0
    manifest = json.loads((tmp_path / "out" / "adapter_manifest.json").read_text())
    assert manifest["mode"] == "merged"
    assert manifest["records"] == len(records)


def test_detect_and_emit_per_tile_mode(tmp_path):
    frames_dir, _ = synthetic_frames(tmp_path, n_frames=1)
    config = AdapterConfig(tile_w=128, tile_h=128, overlap=0.3, merge=False)
    detect_and_emit(frames_dir, tmp_path / "out", config)
    manifest = json.loads((tmp_path / "out" / "adapter_manifest.json").read_text())
    assert manifest["mode"] == "per_tile"
    dump = json.loads((tmp_path / "out" / "detections_per_tile.json").read_text())
    assert "0" in dump and len(dump["0"]) == manifest["tiling"]["tiles"]


def test_detect_with_tracking_assigns_consistent_ids(tmp_path):
    frames_dir, _ = synthetic_frames(tmp_path, n_frames=3)
    config = AdapterConfig(tile_w=128, tile_h=128, overlap=0.3, track=True)
    jsonl = detect_and_emit(frames_dir, tmp_path / "out", config)
    records = [json.loads(line) for line in jsonl.read_text().splitlines()]
    static_ids = {r["track"] for r in records if r["bbox"][0] > 100}
    assert len(static_ids) == 1


def test_detect_rejects_mismatched_plan(tmp_path):
    frames_dir, _ = synthetic_frames(tmp_path, n_frames=1)
    plan = {
        "tile_w": 64, "tile_h": 64, "overlap": 0.2,
        "frame_w": 999, "frame_h": 999,
        "tiles": [[0, 0, 64, 64]],
    }
    plan_path = tmp_path / "plan.json"
    plan_path.write_text(json.dumps(plan))
    with pytest.raises(ValueError):
        detect_and_emit(frames_dir, tmp_path / "out", AdapterConfig(tile_plan=plan_path))
