"""Linear assignment with cost gating, and thresholded IoU matching."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core_types import BBox, iou_matrix


@dataclass
class MatchResult:
    pairs: list[tuple[int, int]] = field(default_factory=list)
    unmatched_tracks: list[int] = field(default_factory=list)
    unmatched_detections: list[int] = field(default_factory=list)


def solve_assignment(cost, max_cost: float = np.inf) -> MatchResult:
    """Minimum-cost one-to-one assignment; pairs costing more than ``max_cost`` are dropped.

    Gated cells are replaced by a sentinel larger than any feasible total before
    solving, so a gated pair can never displace a feasible one.  Rectangular
    inputs are fine (scipy pads implicitly).
    """
    cost = np.asarray(cost, dtype=float)
    if cost.size == 0:
        n_rows, n_cols = cost.shape if cost.ndim == 2 else (0, 0)
        return MatchResult([], list(range(n_rows)), list(range(n_cols)))
    n_rows, n_cols = cost.shape
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")

    gated = cost > max_cost
    work = cost
    if gated.any():
        finite = cost[~gated]
        span = (np.abs(finite).max() if finite.size else 0.0) + 1.0
        sentinel = span * (min(n_rows, n_cols) + 1) * 2
        work = np.where(gated, sentinel, cost)

    rows, cols = linear_sum_assignment(work)
    pairs = [(int(r), int(c)) for r, c in zip(rows, cols) if not gated[r, c]]
    pairs.sort()
    matched_r = {r for r, _ in pairs}
    matched_c = {c for _, c in pairs}
    return MatchResult(
        pairs,
        [r for r in range(n_rows) if r not in matched_r],
        [c for c in range(n_cols) if c not in matched_c],
    )


def total_cost(cost, result: MatchResult) -> float:
    cost = np.asarray(cost, dtype=float)
    return float(sum(cost[r, c] for r, c in result.pairs))


def iou_match(tracks: list[BBox], dets: list[BBox], threshold: float) -> MatchResult:
    """Optimal assignment on ``1 - IoU`` keeping only pairs with IoU >= threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"IoU threshold must lie in [0, 1], got {threshold}")
    if not tracks or not dets:
        return MatchResult([], list(range(len(tracks))), list(range(len(dets))))
    ious = iou_matrix(tracks, dets)
    # disjoint boxes never match, even at threshold 0
    gated = (ious < threshold) | (ious <= 0.0)
    cost = np.where(gated, 2.0, 1.0 - ious)
    return solve_assignment(cost, max_cost=1.0)
