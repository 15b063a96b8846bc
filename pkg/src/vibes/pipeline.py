"""Single-pass streaming orchestration of the full scoring pipeline.

Per frame: update tracks, then per live track build the neighborhood, project
velocity onto flow axes, aggregate the historical window, run the MAP update
and score surprise. Positive scores open pending triggers that are flushed as
packets once the future edge of their window has streamed past, then handed to
the dispatcher through a bounded queue (never blocking the scoring loop).

No output at frame t depends on detections after t + tau_f.
"""

from __future__ import annotations

import json
import math
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from . import bayes as B
from .config import PipelineConfig
from .errors import DegenerateFlowError
from .frenet import IDENTITY_AXES, build_neighborhood, flow_axes, own_heading, project
from .ingest import Detection, FrameStore, IngestReport, iter_detection_batches
from .kinematics import Track, Tracker, aggregate_window, estimate_velocity
from .localization import TriggerPacket, assemble_packet, should_trigger, write_packet
from .reasoner import Dispatcher


@dataclass
class ScoreRow:
    frame: int
    track: int
    s_par: float
    s_perp: float
    s_ego: float


@dataclass
class RunStats:
    frames_processed: int = 0
    detections: int = 0
    tracks_spawned: int = 0
    rows_scored: int = 0
    packets_emitted: int = 0
    packets_spilled: int = 0
    reasoner_frames: int = 0
    scoring_wall_s: float = 0.0
    reasoner_wall_s: float = 0.0
    last_frame: int = -1

    @property
    def scoring_fps(self) -> float:
        return self.frames_processed / self.scoring_wall_s if self.scoring_wall_s > 0 else float("inf")

    def to_dict(self) -> dict:
        return {
            "frames_processed": self.frames_processed,
            "detections": self.detections,
            "tracks_spawned": self.tracks_spawned,
            "rows_scored": self.rows_scored,
            "packets_emitted": self.packets_emitted,
            "packets_spilled": self.packets_spilled,
            "reasoner_frames": self.reasoner_frames,
            "scoring_wall_s": self.scoring_wall_s,
            "reasoner_wall_s": self.reasoner_wall_s,
            "scoring_fps": self.scoring_fps,
            "last_frame": self.last_frame,
        }


class _TrackScoreState:
    __slots__ = ("components", "flow_history", "sigma_par", "sigma_perp", "last_trigger")

    def __init__(self, flow_history_len: int):
        self.components: deque[tuple[int, float, float]] = deque()
        self.flow_history: deque[float] = deque(maxlen=flow_history_len)
        self.sigma_par: Optional[float] = None
        self.sigma_perp: Optional[float] = None
        self.last_trigger: Optional[int] = None


class _SceneState:
    """Camera-level aggregates; source of the static_prior freeze snapshot."""

    def __init__(self, flow_history_len: int):
        self.flow_samples: deque[float] = deque(maxlen=flow_history_len)
        self.sigma_par_ema: Optional[float] = None
        self.sigma_perp_ema: Optional[float] = None
        self.frozen: Optional[B.Posterior] = None


@dataclass
class _PendingTrigger:
    t_a: int
    ego_id: int
    member_ids: tuple[int, ...]
    scores: B.SurpriseScore
    diagnostics: dict


class StreamEngine:
    """Owns one camera's scoring state; single-threaded per camera."""

    def __init__(
        self,
        config: PipelineConfig,
        out_dir: Optional[Union[str, Path]] = None,
        frame_store: Optional[FrameStore] = None,
        dispatcher: Optional[Dispatcher] = None,
    ):
        config.validate()
        self.config = config
        self.frame_store = frame_store
        self.dispatcher = dispatcher
        self.out_dir = Path(out_dir) if out_dir is not None else None
        if self.out_dir is not None:
            (self.out_dir / "packets").mkdir(parents=True, exist_ok=True)
        self.frame_w = frame_store.width if frame_store is not None else config.frame_w
        self.frame_h = frame_store.height if frame_store is not None else config.frame_h
        self.radius = config.frenet.radius_frac * math.hypot(self.frame_w, self.frame_h)

        self.tracker = Tracker(
            iou_gate=config.tracker.iou_gate,
            tau_lost=config.tracker.tau_lost,
            delta_max=config.tracker.delta_max,
        )
        self._archive: dict[int, Track] = {}
        self._states: dict[int, _TrackScoreState] = {}
        self._scene = _SceneState(config.bayes.flow_history_len)
        self._pending: list[_PendingTrigger] = []
        self.score_rows: list[ScoreRow] = []
        self.packets: list[TriggerPacket] = []
        self.trigger_frames: list[int] = []
        self._reasoner_frames: set[int] = set()
        self.stats = RunStats()
        self._finished = False

    # ------------------------------------------------------------------ frame

    def process_batch(self, frame: int, detections: Sequence[Detection]) -> None:
        started = time.perf_counter()
        live, retired = self.tracker.step(frame, detections)
        for track in retired:
            self._archive[track.track_id] = track
        self.stats.detections += len(detections)
        spawned = sum(1 for t in live if t.first_frame == frame)
        self.stats.tracks_spawned += spawned

        observed = sorted(
            (t for t in live if t.last_frame == frame), key=lambda t: t.track_id
        )
        for track in observed:
            estimate_velocity(track, frame, self.config.tracker.delta_max)
        for track in observed:
            if track.velocity(frame) is not None:
                self._score_track(frame, track)

        self._flush_pending(frame, final=False)
        self.stats.frames_processed += 1
        self.stats.last_frame = frame
        self.stats.scoring_wall_s += time.perf_counter() - started

    # ------------------------------------------------------------------ score

    def _axes_for(self, frame: int, track: Track, flow: Optional[tuple[float, float]]):
        cfg = self.config
        if cfg.bayes.mode == "no_frenet":
            return IDENTITY_AXES
        if flow is not None:
            try:
                return flow_axes(flow, cfg.frenet.eps_flow)
            except DegenerateFlowError:
                pass
        heading = own_heading(track, frame, cfg.kinematics.tau_h)
        if heading is None:
            return None
        try:
            return flow_axes(heading, cfg.frenet.eps_flow)
        except DegenerateFlowError:
            return None

    def _score_track(self, frame: int, track: Track) -> None:
        cfg = self.config
        bayes_cfg = cfg.bayes
        state = self._states.get(track.track_id)
        if state is None:
            state = _TrackScoreState(bayes_cfg.flow_history_len)
            self._states[track.track_id] = state

        nb = build_neighborhood(
            track, self.tracker.tracks, frame, self.radius, cfg.frenet.tau_trk
        )
        axes = self._axes_for(frame, track, nb.flow)
        if axes is None:
            return  # no reference frame: scoring skipped at this frame

        velocity = track.velocity(frame)
        feat = project(velocity, axes)
        state.components.append((frame, feat.v_par, feat.v_perp))
        horizon_start = frame - cfg.kinematics.tau_h
        while state.components and state.components[0][0] < horizon_start:
            state.components.popleft()
        agg = aggregate_window([(c[1], c[2]) for c in state.components])
        if agg is None:
            return

        obs_par: list[float] = []
        obs_perp: list[float] = []
        for tid in nb.member_ids:
            v_j = self.tracker.tracks[tid].velocity(frame)
            feat_j = project(v_j, axes)
            obs_par.append(feat_j.v_par)
            obs_perp.append(feat_j.v_perp)

        if nb.flow is not None:
            # Along e_par this equals the flow speed in full mode and the signed
            # axis component under no_frenet, keeping the prior consistent with
            # whatever frame the features are measured in.
            flow_par = nb.flow[0] * axes.e_par[0] + nb.flow[1] * axes.e_par[1]
            state.flow_history.append(flow_par)
            self._scene.flow_samples.append(flow_par)

        prior_mu = B.longitudinal_prior(
            list(state.flow_history),
            bayes_cfg.flow_history_len,
            current_obs_mean=(sum(obs_par) / len(obs_par)) if obs_par else None,
        )
        if prior_mu is None:
            return

        static_mode = bayes_cfg.mode == "static_prior"
        if static_mode and self._scene.frozen is None and frame >= bayes_cfg.warmup_frames:
            if self._scene.flow_samples:
                self._scene.frozen = B.Posterior(
                    mu_par=sum(self._scene.flow_samples) / len(self._scene.flow_samples),
                    mu_perp=0.0,
                    sigma_par=max(self._scene.sigma_par_ema or 0.0, bayes_cfg.sigma_floor),
                    sigma_perp=max(self._scene.sigma_perp_ema or 0.0, bayes_cfg.sigma_floor),
                    n_obs=0,
                )

        if static_mode and self._scene.frozen is not None:
            posterior = self._scene.frozen
        else:
            sigma_par = B.posterior_std(
                obs_par, bayes_cfg.sigma_floor, bayes_cfg.ema_alpha, state.sigma_par
            )
            sigma_perp = B.posterior_std(
                obs_perp, bayes_cfg.sigma_floor, bayes_cfg.ema_alpha, state.sigma_perp
            )
            state.sigma_par = sigma_par
            state.sigma_perp = sigma_perp
            posterior = B.Posterior(
                mu_par=B.map_update(prior_mu, obs_par, bayes_cfg.lam),
                mu_perp=B.map_update(0.0, obs_perp, bayes_cfg.lam),
                sigma_par=sigma_par,
                sigma_perp=sigma_perp,
                n_obs=len(obs_par),
            )
            raw_par = B.population_std(obs_par)
            raw_perp = B.population_std(obs_perp)
            alpha = bayes_cfg.ema_alpha
            self._scene.sigma_par_ema = (
                raw_par
                if self._scene.sigma_par_ema is None
                else alpha * raw_par + (1 - alpha) * self._scene.sigma_par_ema
            )
            self._scene.sigma_perp_ema = (
                raw_perp
                if self._scene.sigma_perp_ema is None
                else alpha * raw_perp + (1 - alpha) * self._scene.sigma_perp_ema
            )

        score = B.surprise(
            agg.mean_v_par,
            agg.max_abs_v_perp,
            posterior,
            bayes_cfg.alpha_par,
            bayes_cfg.alpha_perp,
        )
        self.score_rows.append(
            ScoreRow(frame, track.track_id, score.s_par, score.s_perp, score.s_ego)
        )
        self.stats.rows_scored += 1

        if should_trigger(score.s_ego, state.last_trigger, cfg.loc.tau_cool, frame):
            state.last_trigger = frame
            self.trigger_frames.append(frame)
            self._pending.append(
                _PendingTrigger(
                    t_a=frame,
                    ego_id=track.track_id,
                    member_ids=nb.member_ids,
                    scores=score,
                    diagnostics={
                        "v_par_eff": agg.mean_v_par,
                        "v_perp_eff": agg.max_abs_v_perp,
                        "var_v_perp": agg.var_v_perp,
                        "window_len": agg.window_len,
                        "neighborhood_size": nb.size,
                        "mode": bayes_cfg.mode,
                        "posterior": posterior.to_dict(),
                    },
                )
            )

    # ------------------------------------------------------------------ flush

    def _tracks_view(self) -> dict[int, Track]:
        return {**self._archive, **self.tracker.tracks}

    def _flush_pending(self, frame: int, final: bool) -> None:
        cfg = self.config
        due: list[_PendingTrigger] = []
        keep: list[_PendingTrigger] = []
        for p in self._pending:
            (due if final or p.t_a + cfg.loc.tau_f <= frame else keep).append(p)
        if not due:
            self._prune_archive(frame)
            return
        self._pending = keep
        tracks_view = self._tracks_view()
        for p in due:
            packet = assemble_packet(
                t_a=p.t_a,
                ego_id=p.ego_id,
                member_ids=p.member_ids,
                scores=p.scores,
                diagnostics=p.diagnostics,
                tracks=tracks_view,
                tau_p=cfg.loc.tau_p,
                tau_f=cfg.loc.tau_f,
                pad=cfg.loc.pad,
                frame_w=self.frame_w,
                frame_h=self.frame_h,
                end_frame=frame if final else None,
            )
            self.stats.packets_emitted += 1
            self._reasoner_frames.update(range(packet.window[0], packet.window[1] + 1))
            packet_dir: Optional[Path] = None
            if self.out_dir is not None:
                packet, packet_dir = write_packet(
                    packet, self.out_dir / "packets", self.frame_store
                )
            self.packets.append(packet)
            if self.dispatcher is not None and packet_dir is not None:
                if not self.dispatcher.submit(packet, packet_dir):
                    self.stats.packets_spilled += 1
                    if self.out_dir is not None:
                        with (self.out_dir / "spill.txt").open("a", encoding="utf-8") as fh:
                            fh.write(str(packet_dir) + "\n")
        self._prune_archive(frame)

    def _prune_archive(self, frame: int) -> None:
        horizon = frame - (self.config.loc.tau_p + self.config.loc.tau_f + 8)
        if horizon <= 0:
            return
        for tid in [t for t, tr in self._archive.items() if tr.last_frame < horizon]:
            del self._archive[tid]

    # ------------------------------------------------------------------ finish

    def finish(self) -> RunStats:
        if self._finished:
            return self.stats
        self._finished = True
        started = time.perf_counter()
        self._flush_pending(self.stats.last_frame, final=True)
        self.stats.scoring_wall_s += time.perf_counter() - started
        self.stats.reasoner_frames = len(self._reasoner_frames)
        if self.dispatcher is not None:
            self.dispatcher.close()
            self.stats.reasoner_wall_s = self.dispatcher.busy_s
        if self.out_dir is not None:
            self._write_outputs()
        return self.stats

    def _write_outputs(self) -> None:
        assert self.out_dir is not None
        with (self.out_dir / "scores.csv").open("w", encoding="utf-8", newline="") as fh:
            fh.write("frame,track,s_par,s_perp,s_ego\n")
            for row in self.score_rows:
                fh.write(
                    f"{row.frame},{row.track},{row.s_par!r},{row.s_perp!r},{row.s_ego!r}\n"
                )
        (self.out_dir / "run_stats.json").write_text(
            json.dumps(self.stats.to_dict(), indent=2), encoding="utf-8"
        )


def run_batches(
    config: PipelineConfig,
    batches: Iterable[tuple[int, Sequence[Detection]]],
    out_dir: Optional[Union[str, Path]] = None,
    frame_store: Optional[FrameStore] = None,
    dispatcher: Optional[Dispatcher] = None,
) -> tuple[RunStats, StreamEngine]:
    """Drive an engine over prepared batches (the test/simulation entry point)."""
    engine = StreamEngine(config, out_dir=out_dir, frame_store=frame_store, dispatcher=dispatcher)
    for frame, detections in batches:
        engine.process_batch(frame, detections)
    return engine.finish(), engine


def run_pipeline(
    config: PipelineConfig,
    detections: Union[str, Path],
    out_dir: Union[str, Path],
    frames_dir: Optional[Union[str, Path]] = None,
    fmt: str = "jsonl",
) -> RunStats:
    """CLI-facing run: stream a detection file end to end, writing all artifacts."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    store = FrameStore(frames_dir) if frames_dir else None
    dispatcher = None
    if config.reasoner.endpoint:
        dispatcher = Dispatcher(config.reasoner, incident_log=out / "incidents.jsonl")
    report = IngestReport()
    engine = StreamEngine(config, out_dir=out, frame_store=store, dispatcher=dispatcher)
    for frame, batch in iter_detection_batches(detections, fmt=fmt, report=report):
        engine.process_batch(frame, batch)
    stats = engine.finish()
    (out / "ingest_report.json").write_text(
        json.dumps(report.to_dict(), indent=2), encoding="utf-8"
    )
    return stats
