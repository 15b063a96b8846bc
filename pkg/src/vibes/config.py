"""Pipeline configuration: namespaced keys, documented defaults, strict parsing.

Config files are flat ``key = value`` text (``#`` comments allowed); the same
dotted keys work as CLI ``--set`` overrides. Unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Union

from .errors import ConfigError
from .reasoner import ReasonerConfig

MODES = ("full", "no_frenet", "static_prior")


@dataclass
class TilingConfig:
    tile_w: int = 640
    tile_h: int = 640
    overlap: float = 0.25
    nms_iou: float = 0.5


@dataclass
class TrackerConfig:
    iou_gate: float = 0.3
    tau_lost: int = 10
    delta_max: int = 5


@dataclass
class KinematicsConfig:
    tau_h: int = 10


@dataclass
class FrenetConfig:
    radius_frac: float = 0.25
    tau_trk: int = 5
    eps_flow: float = 0.1


@dataclass
class BayesConfig:
    alpha_par: float = 0.1
    alpha_perp: float = 0.1
    lam: float = 4.0
    sigma_floor: float = 0.5
    ema_alpha: float = 0.3
    flow_history_len: int = 50
    mode: str = "full"
    warmup_frames: int = 50


@dataclass
class LocConfig:
    tau_p: int = 20
    tau_f: int = 20
    tau_cool: int = 50
    pad: float = 0.1


@dataclass
class PipelineConfig:
    fps: float = 10.0
    camera_id: str = "cam0"
    frame_w: int = 1920
    frame_h: int = 1080
    tiling: TilingConfig = field(default_factory=TilingConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    kinematics: KinematicsConfig = field(default_factory=KinematicsConfig)
    frenet: FrenetConfig = field(default_factory=FrenetConfig)
    bayes: BayesConfig = field(default_factory=BayesConfig)
    loc: LocConfig = field(default_factory=LocConfig)
    reasoner: ReasonerConfig = field(default_factory=ReasonerConfig)

    def validate(self) -> None:
        if self.bayes.mode not in MODES:
            raise ConfigError(f"bayes.mode must be one of {MODES}, got {self.bayes.mode!r}")


# dotted key -> (section attribute or None for top level, field name)
_KEYMAP: dict[str, tuple[str | None, str]] = {
    "fps": (None, "fps"),
    "camera_id": (None, "camera_id"),
    "frame_w": (None, "frame_w"),
    "frame_h": (None, "frame_h"),
    "tiling.tile_w": ("tiling", "tile_w"),
    "tiling.tile_h": ("tiling", "tile_h"),
    "tiling.overlap": ("tiling", "overlap"),
    "tiling.nms_iou": ("tiling", "nms_iou"),
    "tracker.iou_gate": ("tracker", "iou_gate"),
    "tracker.tau_lost": ("tracker", "tau_lost"),
    "tracker.delta_max": ("tracker", "delta_max"),
    "kinematics.tau_h": ("kinematics", "tau_h"),
    "frenet.radius_frac": ("frenet", "radius_frac"),
    "frenet.tau_trk": ("frenet", "tau_trk"),
    "frenet.eps_flow": ("frenet", "eps_flow"),
    "bayes.alpha_par": ("bayes", "alpha_par"),
    "bayes.alpha_perp": ("bayes", "alpha_perp"),
    "bayes.lambda": ("bayes", "lam"),
    "bayes.sigma_floor": ("bayes", "sigma_floor"),
    "bayes.ema_alpha": ("bayes", "ema_alpha"),
    "bayes.flow_history_len": ("bayes", "flow_history_len"),
    "bayes.mode": ("bayes", "mode"),
    "bayes.warmup_frames": ("bayes", "warmup_frames"),
    "loc.tau_p": ("loc", "tau_p"),
    "loc.tau_f": ("loc", "tau_f"),
    "loc.tau_cool": ("loc", "tau_cool"),
    "loc.pad": ("loc", "pad"),
    "reasoner.endpoint": ("reasoner", "endpoint"),
    "reasoner.model": ("reasoner", "model"),
    "reasoner.timeout_s": ("reasoner", "timeout_s"),
    "reasoner.max_retries": ("reasoner", "max_retries"),
    "reasoner.max_crops": ("reasoner", "max_crops"),
    "reasoner.queue_size": ("reasoner", "queue_size"),
    "reasoner.include_diagnostics": ("reasoner", "include_diagnostics"),
    "reasoner.backoff_s": ("reasoner", "backoff_s"),
    "reasoner.prompt_template": ("reasoner", "prompt_template"),
}


def _coerce(key: str, value: Any, target_type: type) -> Any:
    try:
        if target_type is bool:
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in ("true", "1", "yes", "on"):
                return True
            if text in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if target_type is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(f"not an integer: {value!r}")
            return int(value)
        if target_type is float:
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from exc


def apply_overrides(config: PipelineConfig, items: Mapping[str, Any]) -> PipelineConfig:
    for key, value in items.items():
        if key not in _KEYMAP:
            raise ConfigError(f"unknown config key {key!r}")
        section, attr = _KEYMAP[key]
        target = config if section is None else getattr(config, section)
        current = getattr(target, attr)
        setattr(target, attr, _coerce(key, value, type(current)))
    config.validate()
    return config


def parse_kv_text(text: str) -> dict[str, str]:
    items: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        value = value.strip()
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        items[key.strip()] = value
    return items


def load_config(
    path: Union[str, Path, None] = None,
    overrides: Mapping[str, Any] | None = None,
) -> PipelineConfig:
    config = PipelineConfig()
    if path is not None:
        apply_overrides(config, parse_kv_text(Path(path).read_text(encoding="utf-8")))
    if overrides:
        apply_overrides(config, overrides)
    config.validate()
    return config


def config_to_items(config: PipelineConfig) -> dict[str, Any]:
    """Flatten back to dotted keys (documentation and run-stats dumps)."""
    items: dict[str, Any] = {}
    for key, (section, attr) in _KEYMAP.items():
        target = config if section is None else getattr(config, section)
        value = getattr(target, attr)
        if key == "reasoner.prompt_template":
            continue  # multi-line; not representable in the flat format
        items[key] = value
    return items
