"""Flow-aligned coordinate frames.

The longitudinal axis follows the mean velocity of a dynamic neighborhood of
same-direction vehicles; the lateral axis is its +90 degree (counterclockwise
in image coordinates) rotation. Projecting ego velocity onto these axes makes
the downstream statistics independent of road curvature and camera heading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Optional

from .errors import DegenerateFlowError
from .kinematics import Track


class KinematicFeature(NamedTuple):
    v_par: float
    v_perp: float


@dataclass(frozen=True)
class FrenetAxes:
    e_par: tuple[float, float]
    e_perp: tuple[float, float]


IDENTITY_AXES = FrenetAxes(e_par=(1.0, 0.0), e_perp=(0.0, 1.0))


@dataclass(frozen=True)
class Neighborhood:
    ego_id: int
    member_ids: tuple[int, ...]
    radius: float
    flow: Optional[tuple[float, float]]  # None when the member set is empty

    @property
    def size(self) -> int:
        return len(self.member_ids)


def build_neighborhood(
    ego: Track,
    tracks: Mapping[int, Track],
    t: int,
    radius: float,
    tau_trk: int,
) -> Neighborhood:
    """Same-direction neighbors of the ego within ``radius`` pixels.

    Membership requires a defined velocity at ``t``, a positive dot product
    with the ego velocity (same travel direction), and a minimum tracked age
    for velocity stability. The flow vector is the member-mean velocity.
    """
    p_ego = ego.position(t)
    v_ego = ego.velocity(t)
    members: list[int] = []
    sum_vx = 0.0
    sum_vy = 0.0
    if p_ego is not None and v_ego is not None:
        for tid, track in tracks.items():
            if tid == ego.track_id:
                continue
            p = track.position(t)
            v = track.velocity(t)
            if p is None or v is None:
                continue
            if track.age < tau_trk:
                continue
            if math.hypot(p[0] - p_ego[0], p[1] - p_ego[1]) > radius:
                continue
            if v[0] * v_ego[0] + v[1] * v_ego[1] <= 0.0:
                continue
            members.append(tid)
            sum_vx += v[0]
            sum_vy += v[1]
    flow = (sum_vx / len(members), sum_vy / len(members)) if members else None
    return Neighborhood(
        ego_id=ego.track_id,
        member_ids=tuple(sorted(members)),
        radius=radius,
        flow=flow,
    )


def flow_axes(flow: tuple[float, float], eps_flow: float = 0.1) -> FrenetAxes:
    """Normalize the flow vector into the longitudinal axis; lateral is +90 CCW.

    Raises :class:`DegenerateFlowError` below ``eps_flow`` so the caller can
    fall back to the ego's own smoothed heading or skip scoring.
    """
    norm = math.hypot(flow[0], flow[1])
    if norm < eps_flow:
        raise DegenerateFlowError(f"flow magnitude {norm:.4g} below {eps_flow}")
    e_par = (flow[0] / norm, flow[1] / norm)
    e_perp = (-e_par[1], e_par[0])
    return FrenetAxes(e_par=e_par, e_perp=e_perp)


def project(velocity: tuple[float, float], axes: FrenetAxes) -> KinematicFeature:
    """Resolve a velocity into longitudinal/lateral scalar components."""
    vx, vy = velocity
    return KinematicFeature(
        v_par=vx * axes.e_par[0] + vy * axes.e_par[1],
        v_perp=vx * axes.e_perp[0] + vy * axes.e_perp[1],
    )


def own_heading(track: Track, t: int, tau_h: int) -> Optional[tuple[float, float]]:
    """Mean of the track's own velocities over [t - tau_h, t], if any exist."""
    sum_vx = 0.0
    sum_vy = 0.0
    n = 0
    for frame in range(t - tau_h, t + 1):
        v = track.velocity(frame)
        if v is not None:
            sum_vx += v[0]
            sum_vy += v[1]
            n += 1
    if n == 0:
        return None
    return (sum_vx / n, sum_vy / n)
