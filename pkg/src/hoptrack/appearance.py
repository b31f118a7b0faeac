"""Median-flow appearance tracker for fresh tracks.

Points on a regular grid inside the box are tracked forward and backward by
exhaustive block matching (SSD over a square patch).  Points whose round trip
drifts more than the median forward-backward error are dropped; the median
displacement and the median ratio of pairwise distances of the survivors give
the new box.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core_types import BBox, Track, TrackerConfig
from .kalman import kf_predict, kf_update


@dataclass(frozen=True)
class FlowPoint:
    pos: tuple[float, float]
    forward_disp: tuple[float, float]
    fb_error: float
    valid: bool


class FlowEngine(Protocol):
    def __call__(
        self, src: np.ndarray, dst: np.ndarray, points: np.ndarray, cfg: TrackerConfig
    ) -> tuple[np.ndarray, np.ndarray]: ...


def _as_array(frame) -> np.ndarray:
    pixels = frame.pixels if hasattr(frame, "pixels") else frame
    return np.asarray(pixels, dtype=np.int32)


def block_match(
    src: np.ndarray, dst: np.ndarray, points: np.ndarray, cfg: TrackerConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Track integer ``points`` (N, 2 as x, y) from ``src`` to ``dst``.

    Returns the matched positions and a validity mask.  Among equal SSD
    scores the smallest displacement wins, then the lowest (dy, dx).
    """
    half = cfg.mf_patch // 2
    radius = cfg.mf_radius
    height, width = src.shape[:2]
    out = np.zeros_like(points)
    valid = np.zeros(len(points), dtype=bool)
    offsets = np.arange(-radius, radius + 1)
    dy_grid, dx_grid = np.meshgrid(offsets, offsets, indexing="ij")
    tie_order = dy_grid**2 + dx_grid**2

    for k, (px, py) in enumerate(points):
        if not (half <= px < width - half and half <= py < height - half):
            continue
        template = src[py - half:py + half + 1, px - half:px + half + 1]
        y0, y1 = py - radius - half, py + radius + half + 1
        x0, x1 = px - radius - half, px + radius + half + 1
        # clip the search window so every candidate patch stays inside the frame
        cy0, cy1 = max(y0, 0), min(y1, height)
        cx0, cx1 = max(x0, 0), min(x1, width)
        region = dst[cy0:cy1, cx0:cx1]
        windows = sliding_window_view(region, (cfg.mf_patch, cfg.mf_patch), axis=(0, 1))
        # windows: (ny, nx, 3, patch, patch)
        diff = windows - template.transpose(2, 0, 1)[None, None]
        ssd = np.einsum("ijcab,ijcab->ij", diff, diff)
        ny, nx = ssd.shape
        dys = np.arange(ny) + (cy0 - y0) - radius
        dxs = np.arange(nx) + (cx0 - x0) - radius
        order = tie_order[np.ix_(dys + radius, dxs + radius)]
        flat = np.lexsort((order.ravel(), ssd.ravel()))
        best = flat[0]
        iy, ix = divmod(int(best), nx)
        out[k] = (px + dxs[ix], py + dys[iy])
        valid[k] = True
    return out, valid


def seed_points(bbox: BBox, n: int) -> np.ndarray:
    xs = np.floor(bbox.x + (np.arange(n) + 0.5) * bbox.w / n).astype(np.int64)
    ys = np.floor(bbox.y + (np.arange(n) + 0.5) * bbox.h / n).astype(np.int64)
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def track_points(
    prev, cur, bbox: BBox, cfg: TrackerConfig, engine: FlowEngine = block_match
) -> list[FlowPoint]:
    src, dst = _as_array(prev), _as_array(cur)
    seeds = seed_points(bbox, cfg.mf_points)
    fwd, ok_f = engine(src, dst, seeds, cfg)
    back, ok_b = engine(dst, src, fwd, cfg)
    points = []
    for k in range(len(seeds)):
        valid = bool(ok_f[k] and ok_b[k])
        disp = (float(fwd[k, 0] - seeds[k, 0]), float(fwd[k, 1] - seeds[k, 1]))
        fb = float(np.hypot(*(back[k] - seeds[k]))) if valid else float("inf")
        points.append(FlowPoint((float(seeds[k, 0]), float(seeds[k, 1])), disp, fb, valid))
    return points


def appearance_update(
    prev, cur, bbox: BBox, cfg: TrackerConfig, engine: FlowEngine = block_match
) -> BBox | None:
    """New box for ``bbox`` in ``cur``, or ``None`` when the appearance is lost."""
    points = [p for p in track_points(prev, cur, bbox, cfg, engine) if p.valid]
    if len(points) < cfg.mf_min_points:
        return None
    fb = np.array([p.fb_error for p in points])
    median_fb = float(np.median(fb))
    if median_fb > cfg.mf_max_fb:
        return None
    survivors = [p for p in points if p.fb_error <= median_fb]
    if len(survivors) < cfg.mf_min_points:
        return None

    src = np.array([p.pos for p in survivors])
    disp = np.array([p.forward_disp for p in survivors])
    dst = src + disp
    dx = float(np.median(disp[:, 0]))
    dy = float(np.median(disp[:, 1]))

    i, j = np.triu_indices(len(survivors), k=1)
    d_src = np.hypot(*(src[i] - src[j]).T)
    d_dst = np.hypot(*(dst[i] - dst[j]).T)
    keep = d_src > 0
    scale = float(np.median(d_dst[keep] / d_src[keep])) if keep.any() else 1.0
    if not 0.25 <= scale * scale <= 4.0:
        return None

    new_w, new_h = bbox.w * scale, bbox.h * scale
    return BBox(
        bbox.x + dx + (bbox.w - new_w) / 2,
        bbox.y + dy + (bbox.h - new_h) / 2,
        new_w,
        new_h,
    )


def refine_kalman(track: Track, observed: BBox) -> Track:
    """Feed an appearance-tracker box into the track's filter.

    The filter is advanced one frame before the correction, so the state ends
    up at the frame ``observed`` was measured in.
    """
    if not track.is_new or track.appearance_updates_remaining <= 0:
        raise ValueError(f"track {track.id} is not awaiting appearance refinement")
    track.kalman = kf_update(kf_predict(track.kalman, 1), observed)
    track.appearance_updates_remaining -= 1
    if track.appearance_updates_remaining == 0:
        track.is_new = False
    return track
