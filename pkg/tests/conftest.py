import pytest

from vibes.config import PipelineConfig, load_config
from vibes.ingest import BBox, Detection


@pytest.fixture
def config() -> PipelineConfig:
    return load_config()


def make_detection(
    frame: int,
    corners: tuple[float, float, float, float],
    conf: float = 0.9,
    label: str = "car",
    track: int | None = None,
) -> Detection:
    return Detection(
        frame_index=frame,
        bbox=BBox(*corners),
        confidence=conf,
        class_label=label,
        track_id=track,
    )
