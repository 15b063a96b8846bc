"""Optional greedy IoU tracker for assigning stable ids before export.

Off by default: the engine runs its own tracker, so the adapter normally
emits raw detections with a null track id.
"""

from __future__ import annotations

Box = tuple[float, float, float, float]


def box_iou(a: Box, b: Box) -> float:
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    return inter / union if union > 0 else 0.0


class GreedyTracker:
    def __init__(self, iou_gate: float = 0.3, max_misses: int = 10):
        self.iou_gate = iou_gate
        self.max_misses = max_misses
        self._boxes: dict[int, Box] = {}
        self._misses: dict[int, int] = {}
        self._next_id = 0

    def assign(self, boxes: list[Box]) -> list[int]:
        """Track id per input box for one frame, in input order."""
        pairs = []
        for tid, prev in self._boxes.items():
            for bi, box in enumerate(boxes):
                overlap = box_iou(prev, box)
                if overlap >= self.iou_gate:
                    pairs.append((-overlap, tid, bi))
        pairs.sort()
        assigned: dict[int, int] = {}
        used_tracks: set[int] = set()
        for _, tid, bi in pairs:
            if tid in used_tracks or bi in assigned:
                continue
            assigned[bi] = tid
            used_tracks.add(tid)
        ids = []
        for bi, box in enumerate(boxes):
            tid = assigned.get(bi)
            if tid is None:
                tid = self._next_id
                self._next_id += 1
            self._boxes[tid] = box
            self._misses[tid] = 0
            ids.append(tid)
        for tid in list(self._boxes):
            if tid not in set(ids):
                self._misses[tid] += 1
                if self._misses[tid] > self.max_misses:
                    del self._boxes[tid]
                    del self._misses[tid]
        return ids
