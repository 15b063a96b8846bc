"""Video decoding into the engine's frame-store directory contract.

Output layout: zero-padded ``%06d.png`` frames plus ``manifest.json`` with
``{"width": W, "height": H, "fps": fps}``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union


class VideoError(RuntimeError):
    pass


def select_frame_indices(src_fps: float, target_fps: float, n_frames: int) -> list[int]:
    """Source frame indices kept when resampling to target_fps.

    Uniform decimation: 30 fps to 10 fps keeps every 3rd frame. A target at or
    above the source rate keeps every frame.
    """
    if src_fps <= 0 or target_fps <= 0:
        raise ValueError("frame rates must be positive")
    if target_fps >= src_fps:
        return list(range(n_frames))
    step = src_fps / target_fps
    indices = []
    k = 0
    while True:
        idx = int(round(k * step))
        if idx >= n_frames:
            break
        indices.append(idx)
        k += 1
    return indices


def write_manifest(out_dir: Path, width: int, height: int, fps: float) -> None:
    manifest = {"width": int(width), "height": int(height), "fps": float(fps)}
    (out_dir / "manifest.json").write_text(json.dumps(manifest), encoding="utf-8")


def extract_frames(
    video: Union[str, Path],
    out_dir: Union[str, Path],
    target_fps: float = 10.0,
) -> Path:
    """Decode a video into a frame directory resampled to ``target_fps``."""
    import cv2

    video = Path(video)
    out = Path(out_dir)
    capture = cv2.VideoCapture(str(video))
    if not capture.isOpened():
        raise VideoError(f"cannot open video {video}")
    try:
        src_fps = capture.get(cv2.CAP_PROP_FPS) or 0.0
        if src_fps <= 0:
            src_fps = target_fps
        step = src_fps / target_fps if target_fps < src_fps else 1.0
        out.mkdir(parents=True, exist_ok=True)

        width = height = None
        written = 0
        src_index = 0
        next_keep = 0
        while True:
            ok, frame_bgr = capture.read()
            if not ok:
                break
            if src_index == next_keep:
                if height is None:
                    height, width = frame_bgr.shape[:2]
                cv2.imwrite(str(out / f"{written:06d}.png"), frame_bgr)
                written += 1
                next_keep = int(round(written * step))
            src_index += 1
        if written == 0:
            raise VideoError(f"no frames decoded from {video}")
        write_manifest(out, width, height, target_fps)
        return out
    finally:
        capture.release()
