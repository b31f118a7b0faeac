"""Geometry primitives, detections, tracks and the tracker configuration."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .kalman import KalmanState


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, (left, top, width, height) in pixels."""

    x: float
    y: float
    w: float
    h: float

    @property
    def area(self) -> float:
        return max(self.w, 0.0) * max(self.h, 0.0)

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def diagonal(self) -> float:
        return math.hypot(self.w, self.h)

    def centroid(self) -> tuple[float, float]:
        return (self.x + self.w / 2, self.y + self.h / 2)

    def is_valid(self) -> bool:
        return (
            self.w > 0
            and self.h > 0
            and all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h))
        )

    def clip(self, width: float, height: float) -> BBox:
        """Clip to the frame ``[0, width) x [0, height)``; may return a zero-area box."""
        x1 = min(max(self.x, 0.0), width)
        y1 = min(max(self.y, 0.0), height)
        x2 = min(max(self.x2, 0.0), width)
        y2 = min(max(self.y2, 0.0), height)
        return BBox(x1, y1, x2 - x1, y2 - y1)

    def translate(self, dx: float, dy: float) -> BBox:
        return BBox(self.x + dx, self.y + dy, self.w, self.h)

    @classmethod
    def from_centroid(cls, cx: float, cy: float, w: float, h: float) -> BBox:
        return cls(cx - w / 2, cy - h / 2, w, h)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


def iou(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return min(1.0, inter / union)


def iou_matrix(boxes_a: list[BBox], boxes_b: list[BBox]) -> np.ndarray:
    out = np.zeros((len(boxes_a), len(boxes_b)))
    for i, a in enumerate(boxes_a):
        for j, b in enumerate(boxes_b):
            out[i, j] = iou(a, b)
    return out


def centroid_distance(a: BBox, b: BBox) -> float:
    (ax, ay), (bx, by) = a.centroid(), b.centroid()
    return math.hypot(ax - bx, ay - by)


@dataclass(frozen=True)
class Detection:
    frame_id: int
    bbox: BBox
    confidence: float

    def __post_init__(self) -> None:
        if self.frame_id < 0:
            raise ValueError(f"frame_id must be non-negative, got {self.frame_id}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")


class TrackStatus(Enum):
    ACTIVE = "Active"
    LOST = "Lost"
    REMOVED = "Removed"


_LEGAL_TRANSITIONS = {
    (TrackStatus.ACTIVE, TrackStatus.LOST),
    (TrackStatus.LOST, TrackStatus.ACTIVE),
    (TrackStatus.LOST, TrackStatus.REMOVED),
    (TrackStatus.ACTIVE, TrackStatus.REMOVED),
}


class IllegalTransition(ValueError):
    pass


def check_transition(old: TrackStatus, new: TrackStatus) -> TrackStatus:
    if (old, new) not in _LEGAL_TRANSITIONS:
        raise IllegalTransition(f"illegal track status transition {old.value} -> {new.value}")
    return new


@dataclass
class AppearanceTemplate:
    """Per-cell colour statistics of a detector-confirmed crop.

    ``grid_histograms`` has shape (rows, cols, 3, bins), ``grid_means`` (rows, cols, 3).
    """

    grid_histograms: np.ndarray
    grid_means: np.ndarray
    source_frame_id: int


@dataclass
class Track:
    id: int
    kalman: KalmanState
    status: TrackStatus
    last_bbox: BBox
    template: AppearanceTemplate | None = None
    is_new: bool = True
    appearance_updates_remaining: int = 2
    frames_lost: int = 0
    score: float = 1.0
    # frame index the Kalman mean refers to
    kf_frame: int = 0
    # centroid/frame of the last detector confirmation, used as trajectory origin
    anchor: tuple[float, float] | None = None
    anchor_frame: int = 0
    last_active_frame: int = 0
    # suppressed during a hopping frame (still checked on later hopping frames)
    lost_in_hop: bool = False

    def set_status(self, new: TrackStatus) -> None:
        if new is self.status:
            return
        self.status = check_transition(self.status, new)


@dataclass(frozen=True)
class TrackerConfig:
    """Every tunable threshold of the tracker.

    ``eps1``, ``psi2`` and ``psi4`` default to ``None`` and resolve against the
    frame diagonal / grid size (see :meth:`eps1_px`, :attr:`psi2_cells`,
    :attr:`psi4_cells`).
    """

    tau: float = 0.4
    phi1: float = 0.7
    phi2: float = 0.3
    phi3: float = 0.5
    psi1: float = 0.15
    psi2: int | None = None
    psi3: float = 0.2
    psi4: int | None = None
    eps1: float | None = None
    eps1_frac: float = 0.1
    eps2: float = 0.1
    min_cluster_size: int = 3
    lambda_min: int = 6
    lambda_max: int = 30
    lambda_init: int | None = None
    cluster_saturation: float = 4.0
    density_weight: float = 0.5
    grid_rows: int = 4
    grid_cols: int = 4
    traj_perp_frac: float = 0.5
    traj_forward_factor: float = 1.5
    lost_timeout: int = 30
    hist_bins: int = 32
    use_trajectory: bool = True
    appearance_updates: int = 2
    mf_points: int = 8
    mf_patch: int = 7
    mf_radius: int = 12
    mf_max_fb: float = 4.0
    mf_min_points: int = 4

    def __post_init__(self) -> None:
        self.validate()

    @property
    def n_cells(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def psi2_cells(self) -> int:
        return self.psi2 if self.psi2 is not None else math.ceil(0.6 * self.n_cells)

    @property
    def psi4_cells(self) -> int:
        return self.psi4 if self.psi4 is not None else math.ceil(0.5 * self.n_cells)

    @property
    def initial_lambda(self) -> int:
        return self.lambda_init if self.lambda_init is not None else self.lambda_max

    def eps1_px(self, frame_width: float, frame_height: float) -> float:
        if self.eps1 is not None:
            return self.eps1
        return self.eps1_frac * math.hypot(frame_width, frame_height)

    def validate(self) -> None:
        def bad(key: str, why: str) -> ValueError:
            return ValueError(f"invalid config value for '{key}': {why}")

        if not 0.0 <= self.tau <= 1.0:
            raise bad("tau", "must lie in [0, 1]")
        if not 0.0 <= self.phi1 <= 1.0:
            raise bad("phi1", "must lie in [0, 1]")
        if not 0.0 <= self.phi2 < self.phi1:
            raise bad("phi2", "requires 0 <= phi2 < phi1")
        if not 0.0 <= self.phi3 <= 1.0:
            raise bad("phi3", "must lie in [0, 1]")
        if self.grid_rows < 1:
            raise bad("grid_rows", "must be >= 1")
        if self.grid_cols < 1:
            raise bad("grid_cols", "must be >= 1")
        if self.lambda_min <= 0:
            raise bad("lambda_min", "must be > 0")
        if self.lambda_max < self.lambda_min:
            raise bad("lambda_max", "must be >= lambda_min")
        if self.lambda_init is not None and not self.lambda_min <= self.lambda_init <= self.lambda_max:
            raise bad("lambda_init", "must lie within [lambda_min, lambda_max]")
        if self.psi1 <= 0:
            raise bad("psi1", "must be > 0")
        if self.psi2 is not None and not 0 <= self.psi2 <= self.n_cells:
            raise bad("psi2", f"must lie in [0, {self.n_cells}]")
        if self.psi3 <= 0:
            raise bad("psi3", "must be > 0")
        if self.psi4 is not None and not 0 <= self.psi4 <= self.n_cells:
            raise bad("psi4", f"must lie in [0, {self.n_cells}]")
        if self.eps1 is not None and self.eps1 < 0:
            raise bad("eps1", "must be >= 0")
        if not 0.0 <= self.eps2 <= 1.0:
            raise bad("eps2", "must lie in [0, 1]")
        if self.min_cluster_size < 0:
            raise bad("min_cluster_size", "must be >= 0")
        if self.cluster_saturation <= 0:
            raise bad("cluster_saturation", "must be > 0")
        if self.traj_perp_frac <= 0:
            raise bad("traj_perp_frac", "must be > 0")
        if self.lost_timeout < 0:
            raise bad("lost_timeout", "must be >= 0")
        if self.hist_bins < 1 or self.hist_bins > 256:
            raise bad("hist_bins", "must lie in [1, 256]")
        if self.appearance_updates < 0:
            raise bad("appearance_updates", "must be >= 0")
        if self.mf_points < 2:
            raise bad("mf_points", "must be >= 2")
        if self.mf_patch < 1 or self.mf_patch % 2 == 0:
            raise bad("mf_patch", "must be a positive odd number")
        if self.mf_radius < 0:
            raise bad("mf_radius", "must be >= 0")

    def with_overrides(self, **kwargs) -> TrackerConfig:
        return replace(self, **kwargs)

    @classmethod
    def field_types(cls) -> dict[str, str]:
        return {f.name: str(f.type) for f in fields(cls)}


__all__ = [
    "AppearanceTemplate",
    "BBox",
    "Detection",
    "IllegalTransition",
    "Track",
    "TrackStatus",
    "TrackerConfig",
    "centroid_distance",
    "check_transition",
    "iou",
    "iou_matrix",
]
