"""Detector backends behind one small interface.

The default ``BlobDetector`` finds connected regions that contrast with the
frame's dominant background color. It needs no model weights, which makes it
the right backend for synthetic renders and for exercising the full tile /
merge / export path; any learned detector can be registered alongside it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np


@dataclass(frozen=True)
class RawDetection:
    box: tuple[float, float, float, float]  # x_min, y_min, x_max, y_max
    confidence: float
    label: str


class Detector(Protocol):
    def detect(self, image: np.ndarray) -> list[RawDetection]:
        """Detections in image-local pixel coordinates."""


class BlobDetector:
    """Background-contrast connected components.

    The background is taken as the most frequent quantized color; pixels
    farther than ``contrast`` (L1 over RGB) form the foreground mask. Small
    components (lane markings, speckle) fall below ``min_area``.
    """

    def __init__(self, contrast: float = 45.0, min_area: float = 12.0, label: str = "vehicle"):
        self.contrast = contrast
        self.min_area = min_area
        self.label = label

    def _background_color(self, image: np.ndarray) -> np.ndarray:
        quantized = (image[::4, ::4].reshape(-1, 3) // 8).astype(np.int32)
        keys = quantized[:, 0] * 4096 + quantized[:, 1] * 64 + quantized[:, 2]
        values, counts = np.unique(keys, return_counts=True)
        dominant = values[np.argmax(counts)]
        base = np.array(
            [(dominant // 4096) % 64, (dominant // 64) % 64, dominant % 64], dtype=np.float64
        )
        return base * 8.0 + 4.0

    def detect(self, image: np.ndarray) -> list[RawDetection]:
        import cv2

        background = self._background_color(image)
        distance = np.abs(image.astype(np.float64) - background).sum(axis=2)
        mask = (distance > self.contrast).astype(np.uint8)
        n_labels, _, stats, _ = cv2.connectedComponentsWithStats(mask, connectivity=8)
        detections = []
        for i in range(1, n_labels):
            x, y, w, h, area = stats[i]
            if area < self.min_area or w < 2 or h < 2:
                continue
            fill = area / float(w * h)
            detections.append(
                RawDetection(
                    box=(float(x), float(y), float(x + w), float(y + h)),
                    confidence=float(min(0.99, 0.5 + 0.5 * fill)),
                    label=self.label,
                )
            )
        return detections


_REGISTRY: dict[str, Callable[[], Detector]] = {
    "blob": BlobDetector,
}


def register_detector(name: str, factory: Callable[[], Detector]) -> None:
    _REGISTRY[name] = factory


def get_detector(name: str) -> Detector:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ValueError(f"unknown detector {name!r}; registered: {sorted(_REGISTRY)}") from None
