"""Content-aware detection period selection.

Objects are grouped with a DBScan variant whose neighbour rule requires both a
short centroid distance and overlapping boxes.  The number and density of the
resulting clusters set the detection period ``lambda`` (frames between two
detection frames): busier scenes get a shorter period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

from .core_types import Detection, TrackerConfig, centroid_distance, iou


@dataclass(frozen=True)
class Cluster:
    member_indices: frozenset[int]
    density: float


@dataclass(frozen=True)
class SamplingDecision:
    lam: int
    cluster_count: int = 0
    timestamp_frame: int = 0


def _are_neighbors(a: Detection, b: Detection, eps1: float, eps2: float) -> bool:
    return centroid_distance(a.bbox, b.bbox) <= eps1 and iou(a.bbox, b.bbox) > eps2


def cluster_detections(
    dets: list[Detection],
    cfg: TrackerConfig,
    eps1: float | None = None,
) -> list[Cluster]:
    """Group detections whose neighbour sets grow to more than ``min_cluster_size`` members.

    ``eps1`` overrides the configured centroid distance (needed when the config
    leaves it relative to a frame size that is not known here).
    """
    if not dets:
        return []
    if eps1 is None:
        if cfg.eps1 is None:
            raise ValueError("eps1 is relative to the frame size; pass it explicitly")
        eps1 = cfg.eps1
    n = len(dets)
    neighbors: list[list[int]] = [[] for _ in range(n)]
    for i, j in combinations(range(n), 2):
        if _are_neighbors(dets[i], dets[j], eps1, cfg.eps2):
            neighbors[i].append(j)
            neighbors[j].append(i)

    # the neighbour relation is symmetric, so expansion yields connected components
    visited = [False] * n
    clusters = []
    for seed in range(n):
        if visited[seed]:
            continue
        visited[seed] = True
        members = [seed]
        frontier = [seed]
        while frontier:
            cur = frontier.pop()
            for nb in neighbors[cur]:
                if not visited[nb]:
                    visited[nb] = True
                    members.append(nb)
                    frontier.append(nb)
        if len(members) > cfg.min_cluster_size:
            clusters.append(Cluster(frozenset(members), _density(dets, members)))
    return clusters


def _density(dets: list[Detection], members: list[int]) -> float:
    pairs = list(combinations(sorted(members), 2))
    if not pairs:
        return 0.0
    return sum(iou(dets[i].bbox, dets[j].bbox) for i, j in pairs) / len(pairs)


def scene_complexity(clusters: list[Cluster], cfg: TrackerConfig) -> float:
    count = len(clusters)
    if count == 0:
        return 0.0
    mean_density = sum(c.density for c in clusters) / count
    return count + cfg.density_weight * mean_density * count


def adjust_rate(
    clusters: list[Cluster],
    cfg: TrackerConfig,
    current: SamplingDecision | None = None,
    frame: int | None = None,
) -> SamplingDecision:
    """Map clusters to a detection period in ``[lambda_min, lambda_max]``."""
    load = min(1.0, scene_complexity(clusters, cfg) / cfg.cluster_saturation)
    raw = cfg.lambda_max - (cfg.lambda_max - cfg.lambda_min) * load
    lam = int(math.floor(raw + 0.5))
    lam = max(cfg.lambda_min, min(cfg.lambda_max, lam))
    if frame is None:
        frame = current.timestamp_frame if current is not None else 0
    return SamplingDecision(lam=lam, cluster_count=len(clusters), timestamp_frame=frame)
