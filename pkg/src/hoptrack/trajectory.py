"""Candidate filtering along the motion ray of an unmatched track."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core_types import Detection, Track, TrackerConfig


@dataclass(frozen=True)
class Trajectory:
    origin: tuple[float, float]
    direction: tuple[float, float]
    gate_perp: float
    elapsed: int
    forward_factor: float = 1.5

    @property
    def speed(self) -> float:
        return math.hypot(*self.direction)


def build_trajectory(track: Track, cfg: TrackerConfig, elapsed: int) -> Trajectory:
    """Ray from the last confirmed centroid along the Kalman velocity.

    Falls back to the Kalman centroid when the track was never confirmed by a
    detection.
    """
    origin = track.anchor if track.anchor is not None else track.kalman.centroid
    h = float(track.kalman.mean[3])
    return Trajectory(
        origin=(float(origin[0]), float(origin[1])),
        direction=track.kalman.velocity,
        gate_perp=cfg.traj_perp_frac * h,
        elapsed=elapsed,
        forward_factor=cfg.traj_forward_factor,
    )


def project(traj: Trajectory, point: tuple[float, float]) -> tuple[float, float]:
    """Return ``(s, perp)``: distance along the unit direction and distance off the ray line."""
    dx = point[0] - traj.origin[0]
    dy = point[1] - traj.origin[1]
    speed = traj.speed
    if speed == 0:
        return 0.0, math.hypot(dx, dy)
    ux, uy = traj.direction[0] / speed, traj.direction[1] / speed
    s = dx * ux + dy * uy
    perp = abs(dx * uy - dy * ux)
    return s, perp


def candidates_on_trajectory(traj: Trajectory, dets: list[Detection]) -> list[int]:
    """Indices of detections close to the ray, best first.

    A detection is kept when its centroid lies within ``gate_perp`` of the ray
    line and its along-ray position falls in
    ``[0, forward_factor * elapsed * speed]``.  A stationary trajectory keeps
    detections within ``gate_perp`` of the origin.
    """
    speed = traj.speed
    expected = traj.elapsed * speed
    window = traj.forward_factor * expected
    kept = []
    for idx, det in enumerate(dets):
        s, perp = project(traj, det.bbox.centroid())
        if perp > traj.gate_perp:
            continue
        if speed > 0 and not 0.0 <= s <= window:
            continue
        kept.append((perp, abs(s - expected), det.bbox.as_tuple(), idx))
    kept.sort()
    return [k[-1] for k in kept]
