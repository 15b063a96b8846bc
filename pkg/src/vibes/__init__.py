"""Streaming far-field expressway anomaly detection.

Online Bayesian surprise over Frenet-decomposed vehicle kinematics triggers
focused spatiotemporal crops that are dispatched asynchronously to an external
vision-language endpoint for semantic explanation.
"""

from .bayes import Posterior, SurpriseScore, inv_norm_cdf, map_update, surprise
from .config import PipelineConfig, load_config
from .frenet import FrenetAxes, KinematicFeature, build_neighborhood, flow_axes, project
from .ingest import BBox, Detection, FrameStore, read_detection_stream
from .kinematics import Track, Tracker, aggregate_window, estimate_velocity
from .localization import TriggerPacket, enclosing_box, should_trigger
from .pipeline import RunStats, StreamEngine, run_batches, run_pipeline
from .simulator import AnomalyEvent, ScenarioSpec, sample_scenario, simulate
from .tiling import TilePlan, merge_detections, plan_tiles

__version__ = "0.1.0"

__all__ = [
    "AnomalyEvent",
    "BBox",
    "Detection",
    "FrameStore",
    "FrenetAxes",
    "KinematicFeature",
    "PipelineConfig",
    "Posterior",
    "RunStats",
    "ScenarioSpec",
    "StreamEngine",
    "SurpriseScore",
    "TilePlan",
    "Track",
    "Tracker",
    "TriggerPacket",
    "aggregate_window",
    "build_neighborhood",
    "enclosing_box",
    "estimate_velocity",
    "flow_axes",
    "inv_norm_cdf",
    "load_config",
    "map_update",
    "merge_detections",
    "plan_tiles",
    "project",
    "read_detection_stream",
    "run_batches",
    "run_pipeline",
    "sample_scenario",
    "should_trigger",
    "simulate",
    "surprise",
    "__version__",
]
