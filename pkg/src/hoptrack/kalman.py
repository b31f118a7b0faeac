"""Constant-velocity Kalman filter over ``(x, y, a, h, vx, vy, va, vh)``.

``(x, y)`` is the box centroid, ``a = w / h`` the aspect ratio and ``h`` the
height.  Noise scales follow the SORT/ByteTrack lineage: standard deviations
proportional to the box height.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_types import BBox

STD_WEIGHT_POSITION = 1.0 / 20
STD_WEIGHT_VELOCITY = 1.0 / 160
MIN_GEOMETRY = 1e-3

_NDIM = 4
_MOTION = np.eye(2 * _NDIM)
for _i in range(_NDIM):
    _MOTION[_i, _NDIM + _i] = 1.0
_OBSERVE = np.eye(_NDIM, 2 * _NDIM)


@dataclass(frozen=True)
class KalmanState:
    mean: np.ndarray
    covariance: np.ndarray

    @property
    def velocity(self) -> tuple[float, float]:
        return float(self.mean[4]), float(self.mean[5])

    @property
    def centroid(self) -> tuple[float, float]:
        return float(self.mean[0]), float(self.mean[1])


def bbox_to_xyah(bbox: BBox) -> np.ndarray:
    cx, cy = bbox.centroid()
    return np.array([cx, cy, bbox.w / bbox.h, bbox.h], dtype=float)


def kf_init(bbox: BBox, velocity: tuple[float, float] | None = None) -> KalmanState:
    """Start a track at ``bbox``, at rest unless a centroid ``velocity`` is given.

    Velocity uncertainty is set above the positional one on the pixel
    dimensions (x, y, h) so that the first measurements move the velocity
    estimate quickly.
    """
    mean = np.zeros(2 * _NDIM)
    mean[:_NDIM] = bbox_to_xyah(bbox)
    if velocity is not None:
        mean[4:6] = velocity
    h = bbox.h
    std = [
        2 * STD_WEIGHT_POSITION * h,
        2 * STD_WEIGHT_POSITION * h,
        1e-2,
        2 * STD_WEIGHT_POSITION * h,
        40 * STD_WEIGHT_VELOCITY * h,
        40 * STD_WEIGHT_VELOCITY * h,
        1e-5,
        40 * STD_WEIGHT_VELOCITY * h,
    ]
    return KalmanState(mean, np.diag(np.square(std)))


def _predict_once(mean: np.ndarray, cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h = mean[3]
    std_pos = [STD_WEIGHT_POSITION * h, STD_WEIGHT_POSITION * h, 1e-2, STD_WEIGHT_POSITION * h]
    std_vel = [STD_WEIGHT_VELOCITY * h, STD_WEIGHT_VELOCITY * h, 1e-5, STD_WEIGHT_VELOCITY * h]
    motion_cov = np.diag(np.square(np.r_[std_pos, std_vel]))
    mean = _MOTION @ mean
    cov = _MOTION @ cov @ _MOTION.T + motion_cov
    return mean, 0.5 * (cov + cov.T)


def kf_predict(state: KalmanState, n_steps: int = 1) -> KalmanState:
    """Advance ``n_steps`` frames by iterating the single-step model."""
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    mean, cov = state.mean.copy(), state.covariance.copy()
    for _ in range(n_steps):
        mean, cov = _predict_once(mean, cov)
    return KalmanState(mean, cov)


def innovation(state: KalmanState, measured: BBox) -> np.ndarray:
    return bbox_to_xyah(measured) - _OBSERVE @ state.mean


def kf_update(state: KalmanState, measured: BBox) -> KalmanState:
    z = bbox_to_xyah(measured)
    if not np.all(np.isfinite(z)) or measured.h <= 0 or measured.w <= 0:
        raise ValueError(f"non-finite or degenerate measurement {measured}")
    mean, cov = state.mean, state.covariance
    h = mean[3]
    std = [STD_WEIGHT_POSITION * h, STD_WEIGHT_POSITION * h, 1e-1, STD_WEIGHT_POSITION * h]
    innovation_cov = _OBSERVE @ cov @ _OBSERVE.T + np.diag(np.square(std))
    cross = cov @ _OBSERVE.T
    gain = np.linalg.solve(innovation_cov, cross.T).T
    new_mean = mean + gain @ (z - _OBSERVE @ mean)
    # Joseph form keeps the posterior symmetric PSD
    ikh = np.eye(2 * _NDIM) - gain @ _OBSERVE
    new_cov = ikh @ cov @ ikh.T + gain @ np.diag(np.square(std)) @ gain.T
    new_cov = 0.5 * (new_cov + new_cov.T)
    new_mean[2] = max(new_mean[2], MIN_GEOMETRY)
    new_mean[3] = max(new_mean[3], MIN_GEOMETRY)
    return KalmanState(new_mean, new_cov)


def kf_to_bbox(state: KalmanState) -> BBox:
    cx, cy, a, h = state.mean[:4]
    w = a * h
    return BBox(float(cx - w / 2), float(cy - h / 2), float(w), float(h))
