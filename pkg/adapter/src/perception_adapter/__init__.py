"""Converts real video into the detection engine's file inputs.

Decodes video into a numbered frame directory with a manifest, runs a detector
over an overlapping tile plan, maps boxes back to global coordinates, and
writes detection JSONL conforming bit-exactly to the engine's ingest schema.
No scoring happens here.
"""

from .detector import BlobDetector, Detector, get_detector
from .emit import AdapterConfig, detect_and_emit
from .frames import extract_frames, select_frame_indices
from .tiles import TileGrid, load_tile_plan, map_box_to_tile_local, plan_grid

__version__ = "0.1.0"

__all__ = [
    "AdapterConfig",
    "BlobDetector",
    "Detector",
    "TileGrid",
    "detect_and_emit",
    "extract_frames",
    "get_detector",
    "load_tile_plan",
    "map_box_to_tile_local",
    "plan_grid",
    "select_frame_indices",
    "__version__",
]
