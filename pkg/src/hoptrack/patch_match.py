"""Discretized appearance matching on image cells.

Static matching compares corresponding cells of two crops through the 1-D
Wasserstein distance between per-channel intensity histograms.  Dynamic
matching compares every cell of one crop with every cell of the other using
cosine similarity on ``<R, G, B, vx, vy>`` and solves the cell pairing as a
thresholded linear assignment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import solve_assignment
from .core_types import AppearanceTemplate, BBox, TrackerConfig


class EmptyCropError(ValueError):
    pass


@dataclass
class MatchCounters:
    """Cell-comparison tallies, one increment per compared cell pair."""

    static_candidates: int = 0
    static_cell_comparisons: int = 0
    dynamic_candidates: int = 0
    dynamic_cell_comparisons: int = 0


def _cell_edges(length: int, parts: int) -> list[int]:
    # integer ranges, remainder pixels go to the last cell
    step = length // parts
    edges = [i * step for i in range(parts)] + [length]
    return edges


def crop_pixels(pixels: np.ndarray, bbox: BBox) -> np.ndarray:
    """Integer-pixel crop of ``bbox`` clipped to the frame; raises on an empty crop."""
    height, width = pixels.shape[:2]
    x1 = max(int(np.floor(bbox.x)), 0)
    y1 = max(int(np.floor(bbox.y)), 0)
    x2 = min(int(np.ceil(bbox.x2)), width)
    y2 = min(int(np.ceil(bbox.y2)), height)
    if x2 <= x1 or y2 <= y1:
        raise EmptyCropError(f"empty crop for {bbox} in {width}x{height} frame")
    return pixels[y1:y2, x1:x2]


def _iter_cells(crop: np.ndarray, rows: int, cols: int):
    ys = _cell_edges(crop.shape[0], rows)
    xs = _cell_edges(crop.shape[1], cols)
    for i in range(rows):
        for j in range(cols):
            yield i, j, crop[ys[i]:ys[i + 1], xs[j]:xs[j + 1]]


def _pixels_of(frame) -> np.ndarray:
    return frame.pixels if hasattr(frame, "pixels") else np.asarray(frame)


def discretize_histograms(frame, bbox: BBox, cfg: TrackerConfig) -> np.ndarray:
    """Per-cell, per-channel normalized histograms, shape (rows, cols, 3, bins).

    Cells with no pixels (crop thinner than the grid) get a uniform histogram.
    """
    crop = crop_pixels(_pixels_of(frame), bbox)
    bins = cfg.hist_bins
    out = np.empty((cfg.grid_rows, cfg.grid_cols, 3, bins))
    for i, j, cell in _iter_cells(crop, cfg.grid_rows, cfg.grid_cols):
        flat = cell.reshape(-1, 3)
        if flat.shape[0] == 0:
            out[i, j] = 1.0 / bins
            continue
        idx = flat.astype(np.int64) * bins // 256
        for ch in range(3):
            counts = np.bincount(idx[:, ch], minlength=bins)
            out[i, j, ch] = counts / flat.shape[0]
    return out


def cell_means(frame, bbox: BBox, cfg: TrackerConfig) -> np.ndarray:
    """Per-cell channel means in [0, 255], shape (rows, cols, 3)."""
    crop = crop_pixels(_pixels_of(frame), bbox)
    out = np.empty((cfg.grid_rows, cfg.grid_cols, 3))
    full_mean = crop.reshape(-1, 3).mean(axis=0)
    for i, j, cell in _iter_cells(crop, cfg.grid_rows, cfg.grid_cols):
        flat = cell.reshape(-1, 3)
        out[i, j] = flat.mean(axis=0) if flat.shape[0] else full_mean
    return out


def build_template(frame, bbox: BBox, cfg: TrackerConfig, frame_id: int) -> AppearanceTemplate:
    return AppearanceTemplate(
        grid_histograms=discretize_histograms(frame, bbox, cfg),
        grid_means=cell_means(frame, bbox, cfg),
        source_frame_id=frame_id,
    )


def wasserstein_1d(p, q) -> float:
    """W1 between two histograms on a shared grid over the unit intensity range."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"histogram bin counts differ: {p.shape} vs {q.shape}")
    bin_width = 1.0 / p.shape[-1]
    return float(np.abs(np.cumsum(p - q)).sum() * bin_width)


def cell_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Channel-averaged Wasserstein distance for each pair of corresponding cells."""
    if a.shape != b.shape:
        raise ValueError(f"grid mismatch: {a.shape} vs {b.shape}")
    bin_width = 1.0 / a.shape[-1]
    per_channel = np.abs(np.cumsum(a - b, axis=-1)).sum(axis=-1) * bin_width
    return per_channel.mean(axis=-1)


def static_match(
    a: np.ndarray,
    b: np.ndarray,
    psi1: float,
    psi2: int,
    counters: MatchCounters | None = None,
) -> bool:
    """True iff strictly more than ``psi2`` cells have distance below ``psi1``."""
    dist = cell_distances(a, b)
    if counters is not None:
        counters.static_candidates += 1
        counters.static_cell_comparisons += dist.size
    return int(np.count_nonzero(dist < psi1)) > psi2


def extract_features(frame, bbox: BBox, vx: float, vy: float, cfg: TrackerConfig) -> np.ndarray:
    """Per-cell ``<R, G, B, vx, vy>``, shape (rows, cols, 5); means in [0, 255]."""
    means = cell_means(frame, bbox, cfg)
    vel = np.broadcast_to([vx, vy], means.shape[:2] + (2,))
    return np.concatenate([means, vel], axis=-1)


def features_from_means(means: np.ndarray, vx: float, vy: float) -> np.ndarray:
    vel = np.broadcast_to([vx, vy], means.shape[:2] + (2,))
    return np.concatenate([means, vel], axis=-1)


def normalize_features(features: np.ndarray, diagonal: float) -> np.ndarray:
    """Scale intensities to [0, 1] and velocities to box diagonals per frame."""
    out = np.array(features, dtype=float)
    out[..., :3] /= 255.0
    if diagonal > 0:
        out[..., 3:] /= diagonal
    return out


def cosine_cost_matrix(b1: np.ndarray, b2: np.ndarray) -> np.ndarray:
    """All-pairs ``1 - cos`` between cells of two feature grids, clamped to [0, 2]."""
    f1 = b1.reshape(-1, b1.shape[-1])
    f2 = b2.reshape(-1, b2.shape[-1])
    n1 = np.linalg.norm(f1, axis=1)
    n2 = np.linalg.norm(f2, axis=1)
    denom = np.outer(n1, n2)
    dots = f1 @ f2.T
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(denom > 0, dots / denom, 0.0)
    # two zero vectors are identical
    cos[np.outer(n1 == 0, n2 == 0)] = 1.0
    return np.clip(1.0 - cos, 0.0, 2.0)


def dynamic_match(
    b1: np.ndarray,
    b2: np.ndarray,
    psi3: float,
    psi4: int,
    counters: MatchCounters | None = None,
) -> bool:
    """True iff more than ``psi4`` cell pairs match at cost below ``psi3``."""
    if b1.shape != b2.shape:
        raise ValueError(f"grid mismatch: {b1.shape} vs {b2.shape}")
    cost = cosine_cost_matrix(b1, b2)
    if counters is not None:
        counters.dynamic_candidates += 1
        counters.dynamic_cell_comparisons += cost.size
    # strict "< psi3": nudge the cap below psi3
    result = solve_assignment(cost, max_cost=np.nextafter(psi3, -np.inf))
    return len(result.pairs) > psi4
