"""Client for an external vision-language endpoint (chat-completions schema).

Trigger packets become focused visual prompts: a bounded number of crop images
spanning the packet window (always including the trigger frame) plus a text
prompt requesting one strict JSON object. Dispatch runs on its own worker so
reasoner latency never blocks the scoring loop.
"""

from __future__ import annotations

import base64
import json
import os
import queue
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

from .errors import ParameterError, ReportParseError
from .localization import TriggerPacket

API_KEY_ENV = "VIBES_API_KEY"

DEFAULT_PROMPT_TEMPLATE = """You are reviewing expressway surveillance crops around a suspected driving anomaly.
The image sequence covers frames {window_start}-{window_end}; the trigger fired at frame {t_a}.
{diagnostics}
Analyze the sequence and respond with exactly one JSON object and no other text, using the keys:
  "incident_type": the primary category (e.g. "traffic accident", "vehicle breakdown", "dangerous driving"),
  "secondary_type": the finer category (e.g. "collision", "congestion", "sudden stop", "wrong way", "swerving", "speeding", "other"),
  "entities": a list of {{"vehicle_type": ..., "role": ...}} objects for every involved vehicle,
  "narrative": a 1-3 sentence explanation of what happened and why it is anomalous."""

DIAGNOSTICS_TEMPLATE = (
    "Kinematic context: surprise scores s_par={s_par:.3f}, s_perp={s_perp:.3f}, "
    "s_ego={s_ego:.3f}; longitudinal window-mean speed {v_par_eff:.2f} px/frame vs "
    "posterior {mu_par:.2f}+/-{sigma_par:.2f}; peak lateral speed {v_perp_eff:.2f} px/frame."
)


@dataclass
class ReasonerConfig:
    endpoint: str = ""
    model: str = "local-vlm"
    timeout_s: float = 30.0
    max_retries: int = 2
    max_crops: int = 8
    queue_size: int = 16
    include_diagnostics: bool = True
    backoff_s: float = 0.5
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE

    def __post_init__(self):
        if self.max_crops < 1:
            raise ParameterError(f"max_crops {self.max_crops} must be >= 1")
        if self.timeout_s <= 0:
            raise ParameterError(f"timeout_s {self.timeout_s} must be positive")


@dataclass
class IncidentReport:
    incident_type: str
    secondary_type: str = ""
    entities: list[dict] = field(default_factory=list)
    narrative: str = ""
    packet_id: str = ""
    latency_ms: float = 0.0
    raw_response: str = ""

    def to_dict(self) -> dict:
        return {
            "incident_type": self.incident_type,
            "secondary_type": self.secondary_type,
            "entities": self.entities,
            "narrative": self.narrative,
            "packet_id": self.packet_id,
            "latency_ms": self.latency_ms,
        }


def select_frames(frames: Sequence[int], t_a: int, max_crops: int) -> list[int]:
    """Pick <= max_crops frames uniformly across the list, forcing t_a in.

    Uniform rule: indices round(i * (n-1) / (m-1)). If the frame nearest t_a is
    not selected, the selected index closest to it is replaced (ties prefer the
    smaller index). Deterministic for a given packet.
    """
    if not frames:
        return []
    ordered = sorted(frames)
    n = len(ordered)
    m = min(max_crops, n)
    if m == 1:
        return [min(ordered, key=lambda f: (abs(f - t_a), f))]
    picked = sorted({round(i * (n - 1) / (m - 1)) for i in range(m)})
    anchor_idx = min(range(n), key=lambda i: (abs(ordered[i] - t_a), i))
    if anchor_idx not in picked:
        victim = min(picked, key=lambda i: (abs(i - anchor_idx), i))
        picked.remove(victim)
        picked.append(anchor_idx)
        picked.sort()
    return [ordered[i] for i in picked]


def _encode_image(path: Path) -> str:
    data = base64.b64encode(path.read_bytes()).decode("ascii")
    suffix = path.suffix.lstrip(".").lower() or "png"
    return f"data:image/{suffix};base64,{data}"


def render_prompt(packet: TriggerPacket, config: ReasonerConfig) -> str:
    diag = ""
    if config.include_diagnostics:
        d = packet.diagnostics
        diag = DIAGNOSTICS_TEMPLATE.format(
            s_par=packet.scores.s_par,
            s_perp=packet.scores.s_perp,
            s_ego=packet.scores.s_ego,
            v_par_eff=float(d.get("v_par_eff", 0.0)),
            v_perp_eff=float(d.get("v_perp_eff", 0.0)),
            mu_par=float(d.get("posterior", {}).get("mu_par", 0.0)),
            sigma_par=float(d.get("posterior", {}).get("sigma_par", 0.0)),
        )
    return config.prompt_template.format(
        window_start=packet.window[0],
        window_end=packet.window[1],
        t_a=packet.t_a,
        diagnostics=diag,
        s_ego=packet.scores.s_ego,
        s_par=packet.scores.s_par,
        s_perp=packet.scores.s_perp,
    )


def build_request(
    packet: TriggerPacket,
    packet_dir: Union[str, Path],
    config: ReasonerConfig,
) -> Optional[dict]:
    """OpenAI-compatible chat-completions vision payload, or None without crops."""
    if not packet.crop_files:
        return None
    packet_dir = Path(packet_dir)
    chosen = select_frames(list(packet.crop_files), packet.t_a, config.max_crops)
    content: list[dict] = [{"type": "text", "text": render_prompt(packet, config)}]
    for frame in chosen:
        uri = _encode_image(packet_dir / packet.crop_files[frame])
        content.append({"type": "image_url", "image_url": {"url": uri}})
    return {
        "model": config.model,
        "temperature": 0.0,
        "messages": [{"role": "user", "content": content}],
    }


_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\n?|```")


def parse_report(text: str) -> IncidentReport:
    """Extract the first well-formed incident object from arbitrary response text.

    Tolerates surrounding prose and code fences. Raises
    :class:`ReportParseError` (carrying the raw text) when no object with a
    non-empty incident_type can be recovered; never raises anything else.
    """
    if not isinstance(text, str):
        raise ReportParseError("response body is not text", raw=repr(text))
    cleaned = _FENCE_RE.sub("", text)
    decoder = json.JSONDecoder()
    idx = cleaned.find("{")
    while idx != -1:
        try:
            obj, _ = decoder.raw_decode(cleaned[idx:])
        except (json.JSONDecodeError, ValueError):
            idx = cleaned.find("{", idx + 1)
            continue
        if isinstance(obj, dict):
            incident = obj.get("incident_type")
            if isinstance(incident, str) and incident.strip():
                entities = []
                raw_entities = obj.get("entities")
                if isinstance(raw_entities, list):
                    for ent in raw_entities:
                        if isinstance(ent, dict):
                            entities.append(
                                {
                                    "vehicle_type": str(ent.get("vehicle_type", "")),
                                    "role": str(ent.get("role", "")),
                                }
                            )
                return IncidentReport(
                    incident_type=incident.strip(),
                    secondary_type=str(obj.get("secondary_type", "") or ""),
                    entities=entities,
                    narrative=str(obj.get("narrative", "") or ""),
                    raw_response=text,
                )
        idx = cleaned.find("{", idx + 1)
    raise ReportParseError("no parseable incident object in response", raw=text)


def post_json(url: str, payload: dict, timeout_s: float) -> str:
    """POST a JSON payload; returns the raw response body text."""
    body = json.dumps(payload).encode("utf-8")
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(API_KEY_ENV)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    request = urllib.request.Request(url, data=body, headers=headers, method="POST")
    with urllib.request.urlopen(request, timeout=timeout_s) as response:
        return response.read().decode("utf-8")


def extract_completion_text(body: str) -> str:
    """Pull the assistant message out of a chat-completions response body."""
    try:
        obj = json.loads(body)
        return obj["choices"][0]["message"]["content"]
    except (json.JSONDecodeError, KeyError, IndexError, TypeError):
        return body


def dispatch_packet(
    packet: TriggerPacket,
    packet_dir: Union[str, Path],
    config: ReasonerConfig,
    post: Optional[Callable[[str, dict, float], str]] = None,
    sleep: Callable[[float], None] = time.sleep,
) -> dict:
    """Send one packet with retry/backoff; always returns a log record."""
    post = post or post_json
    payload = build_request(packet, packet_dir, config)
    if payload is None:
        return {
            "packet": packet.packet_id,
            "ok": False,
            "skipped": True,
            "error": "packet has no crops",
            "attempts": 0,
        }
    attempts = 0
    started = time.perf_counter()
    last_error = ""
    while attempts <= config.max_retries:
        attempts += 1
        try:
            body = post(config.endpoint, payload, config.timeout_s)
            report = parse_report(extract_completion_text(body))
            report.packet_id = packet.packet_id
            report.latency_ms = (time.perf_counter() - started) * 1000.0
            return {
                "packet": packet.packet_id,
                "ok": True,
                "attempts": attempts,
                "latency_ms": report.latency_ms,
                "report": report.to_dict(),
            }
        except ReportParseError as exc:
            last_error = f"parse failure: {exc}"
            break  # a syntactically delivered but unusable answer; no retry
        except Exception as exc:  # transport errors are retryable
            last_error = f"{type(exc).__name__}: {exc}"
            if attempts <= config.max_retries:
                sleep(config.backoff_s * (2 ** (attempts - 1)))
    return {
        "packet": packet.packet_id,
        "ok": False,
        "attempts": attempts,
        "latency_ms": (time.perf_counter() - started) * 1000.0,
        "error": last_error,
    }


class Dispatcher:
    """Bounded-queue worker consuming packets asynchronously.

    ``submit`` never blocks: when the queue is full it returns False and the
    caller spills the packet reference to disk instead. Records are appended
    to the incident log in consumption order.
    """

    _SENTINEL = object()

    def __init__(
        self,
        config: ReasonerConfig,
        incident_log: Optional[Union[str, Path]] = None,
        post: Optional[Callable[[str, dict, float], str]] = None,
    ):
        self.config = config
        self.incident_log = Path(incident_log) if incident_log else None
        self._post = post
        self._queue: queue.Queue = queue.Queue(maxsize=config.queue_size)
        self._records: list[dict] = []
        self._busy_s = 0.0
        self._lock = threading.Lock()
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def submit(self, packet: TriggerPacket, packet_dir: Union[str, Path]) -> bool:
        try:
            self._queue.put_nowait((packet, packet_dir))
            return True
        except queue.Full:
            return False

    def _run(self) -> None:
        while True:
            item = self._queue.get()
            if item is self._SENTINEL:
                return
            packet, packet_dir = item
            started = time.perf_counter()
            record = dispatch_packet(packet, packet_dir, self.config, post=self._post)
            elapsed = time.perf_counter() - started
            with self._lock:
                self._busy_s += elapsed
                self._records.append(record)
                if self.incident_log is not None:
                    with self.incident_log.open("a", encoding="utf-8") as handle:
                        handle.write(json.dumps(record, sort_keys=True) + "\n")

    def close(self) -> None:
        self._queue.put(self._SENTINEL)
        self._thread.join()

    @property
    def busy_s(self) -> float:
        with self._lock:
            return self._busy_s

    @property
    def records(self) -> list[dict]:
        with self._lock:
            return list(self._records)
